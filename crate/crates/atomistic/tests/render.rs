use std::collections::BTreeSet;

use labloop_atomistic::faults::graphene_4x4;
use labloop_atomistic::{execute_plan, render_views, AtomicStructure, StructError};

#[test]
fn graphene_views() {
    let s = execute_plan(&graphene_4x4()).unwrap();
    let r = render_views(&s).unwrap();
    let names: Vec<&str> = r.views.iter().map(|v| v.name.as_str()).collect();
    assert_eq!(names, ["x", "y", "z", "oblique"]);

    // side view of a flat sheet: all discs on one horizontal line
    let x = &r.views[0];
    let rows: BTreeSet<i64> = x.discs.iter().map(|d| (d.y * 1e6).round() as i64).collect();
    assert_eq!(rows.len(), 1);

    // top view: every atom visible separately, each with three neighbours at
    // the same projected distance (hexagonal tiling)
    let z = &r.views[2];
    assert_eq!(z.discs.len(), 32);
    let pts: Vec<(f64, f64)> = z.discs.iter().map(|d| (d.x, d.y)).collect();
    let nn = |i: usize| {
        let mut d: Vec<f64> = (0..pts.len())
            .filter(|&j| j != i)
            .map(|j| ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt())
            .collect();
        d.sort_by(f64::total_cmp);
        d
    };
    let bond_px = nn(0)[0];
    let interior = (0..pts.len()).filter(|&i| {
        let d = nn(i);
        d.len() >= 3 && (d[2] - bond_px).abs() < 1e-6 && d[3] > bond_px * 1.5
    });
    assert!(interior.count() >= 8);
}

#[test]
fn rendering_is_deterministic() {
    let s = execute_plan(&graphene_4x4()).unwrap();
    let a = render_views(&s).unwrap();
    let b = render_views(&s).unwrap();
    for (va, vb) in a.views.iter().zip(&b.views) {
        assert_eq!(va.png, vb.png);
    }
    assert_eq!(a.digest(&s), b.digest(&s));
    assert!(a.digest(&s).contains("C32"));
}

#[test]
fn atom_limit() {
    let n = 10_001;
    let s = AtomicStructure::new(
        vec!["C".to_string(); n],
        (0..n).map(|i| [i as f64 * 2.0, 0.0, 0.0]).collect(),
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        [false; 3],
    )
    .unwrap();
    assert!(matches!(render_views(&s), Err(StructError::TooManyAtoms(10_001))));
}
