//! Crafted faulty structures, each paired with the plan it claims to come
//! from and the issue codes validation must raise. Used by the self-check
//! command and the test suites.

use std::collections::BTreeSet;

use crate::plan::{execute_plan, BuildPlan, Instruction, Placement, Selector};
use crate::structure::{scale, Geometry};
use crate::validate::IssueCode;
use crate::AtomicStructure;

#[derive(Debug, Clone)]
pub struct FaultCase {
    pub name: &'static str,
    pub plan: BuildPlan,
    pub structure: AtomicStructure,
    pub expected: BTreeSet<IssueCode>,
}

fn make(preset: &str, vacuum: Option<f64>) -> Instruction {
    Instruction::MakeLattice { preset: preset.into(), lattice_constant: None, vacuum }
}

fn supercell(n: usize) -> Instruction {
    Instruction::MakeSupercell { na: n, nb: n, nc: 1 }
}

pub fn graphene_4x4() -> BuildPlan {
    BuildPlan::new(vec![make("graphene", None), supercell(4)])
}

pub fn graphene_4x4_vacancy() -> BuildPlan {
    let mut p = graphene_4x4();
    p.instructions.push(Instruction::RemoveAtoms {
        selector: Selector::Species { species: "C".into(), count: 1, placement: Placement::Random { seed: 0 } },
    });
    p
}

/// Graphene 4×4 plan whose last step pulls atom 0 to `distance` Å from its
/// nearest neighbour.
pub fn graphene_with_bond(distance: f64) -> BuildPlan {
    let base = graphene_4x4();
    let s = execute_plan(&base).expect("preset plan");
    let g = Geometry::new(&s, false);
    let sep = (1..s.len())
        .filter_map(|j| g.separation(0, j))
        .min_by(|a, b| a.distance.total_cmp(&b.distance))
        .expect("neighbour");
    let shift = scale(sep.vector, (sep.distance - distance) / sep.distance);
    let mut p = base;
    p.instructions.push(Instruction::Displace { selector: Selector::Indices { indices: vec![0] }, vector: shift });
    p
}

pub fn fault_suite() -> Vec<FaultCase> {
    let codes = |c: &[IssueCode]| c.iter().copied().collect::<BTreeSet<_>>();
    let from_plan = |plan: BuildPlan| {
        let s = execute_plan(&plan).expect("fixture plan executes");
        (plan, s)
    };

    let (clash_plan, clash) = from_plan(graphene_with_bond(0.3));
    let (short_plan, short) = from_plan(graphene_with_bond(1.0));

    let count_plan = graphene_4x4_vacancy();
    let pristine = execute_plan(&graphene_4x4()).expect("pristine");

    let mos2 = BuildPlan::new(vec![make("MoS2_monolayer", None), supercell(4)]);
    let mut wrong_stoich = execute_plan(&mos2).expect("mos2");
    let first_s = wrong_stoich.species.iter().position(|s| s == "S").expect("sulfur");
    wrong_stoich.species[first_s] = "Se".into();

    let (vac_plan, no_vacuum) = from_plan(BuildPlan::new(vec![make("graphene", Some(3.0)), supercell(4)]));

    let cu = BuildPlan::new(vec![make("fcc_Cu", None)]);
    let mut degenerate = execute_plan(&cu).expect("cu");
    degenerate.lattice[2] = [0.0, 0.0, 0.03];

    vec![
        FaultCase { name: "clash", plan: clash_plan, structure: clash, expected: codes(&[IssueCode::Clash, IssueCode::BondLength]) },
        FaultCase { name: "short_bond", plan: short_plan, structure: short, expected: codes(&[IssueCode::BondLength]) },
        FaultCase { name: "wrong_count", plan: count_plan, structure: pristine, expected: codes(&[IssueCode::CountMismatch]) },
        FaultCase { name: "wrong_stoichiometry", plan: mos2, structure: wrong_stoich, expected: codes(&[IssueCode::Stoichiometry]) },
        FaultCase { name: "missing_vacuum", plan: vac_plan, structure: no_vacuum, expected: codes(&[IssueCode::Vacuum]) },
        FaultCase { name: "degenerate_cell", plan: cu, structure: degenerate, expected: codes(&[IssueCode::CellShape]) },
    ]
}
