use labloop_core::*;
use proptest::prelude::*;

fn input() -> InputSummary {
    InputSummary {
        kind: "Image2D".into(),
        data_ref: Some("inputs/haadf.png".into()),
        request: None,
        metadata: [("material".to_string(), "monolayer MoS₂".to_string())].into_iter().collect(),
    }
}

#[test]
fn empty_report_round_trips() {
    let doc = ReportDocument::empty("run-0", "NoveltyAssessment", input());
    let bytes = canonical_serialize(&doc).unwrap();
    let back: ReportDocument = canonical_parse(&bytes).unwrap();
    assert_eq!(back, doc);
}

#[test]
fn unicode_claim_text_round_trips() {
    let mut doc = ReportDocument::empty("run-ü", "NoveltyAssessment", input());
    doc.claims.push(Claim {
        id: content_id("run-ü", "claims", 0),
        statement: "S–Mo–S trilayer shows ordered V₅ vacancy lines — 2 Å shift".into(),
        evidence: vec![],
        keywords: vec!["空位".into()],
        has_evidence_grounding: false,
        origin: ClaimOrigin::Automated,
    });
    let bytes = canonical_serialize(&doc).unwrap();
    let back: ReportDocument = canonical_parse(&bytes).unwrap();
    assert_eq!(back, doc);
}

#[test]
fn repeated_serialization_is_byte_equal() {
    let mut doc = ReportDocument::empty("run-1", "NoveltyAssessment", input());
    doc.analyses.push(AnalysisSummary {
        metadata_digest: "abc".into(),
        findings: vec![Finding {
            tool: "neighbor_stats".into(),
            numbers: vec![KeyNumber::new("modal_distance", 0.18412345678, "nm")],
            observations: vec![],
            artifacts: vec!["nn_hist.png".into()],
        }],
        narrative: "modal spacing 0.184 nm".into(),
        number_mismatches: vec![],
    });
    let a = canonical_serialize(&doc).unwrap();
    let b = canonical_serialize(&doc.clone()).unwrap();
    assert_eq!(digest_hex(&a), digest_hex(&b));
}

#[test]
fn malformed_input_reports_offset() {
    let doc = ReportDocument::empty("run-1", "NoveltyAssessment", input());
    let mut bytes = canonical_serialize(&doc).unwrap();
    let cut = bytes.len() / 2;
    bytes.truncate(cut);
    match canonical_parse::<ReportDocument>(&bytes) {
        Err(CanonicalError::Parse { offset, .. }) => assert!(offset <= cut),
        other => panic!("expected parse error, got {other:?}"),
    }
}

fn category() -> impl Strategy<Value = NoveltyCategory> {
    prop::sample::select(NoveltyCategory::ALL.to_vec())
}

fn arb_report() -> impl Strategy<Value = ReportDocument> {
    let claim = ("[a-z0-9]{8}", "\\PC{1,40}", prop::collection::vec("\\PC{0,12}", 0..3), any::<bool>());
    let number = ("[a-z_]{1,10}", -1e12f64..1e12, "[a-zA-Zμ]{0,3}");
    (
        prop::collection::vec(claim, 0..5),
        prop::collection::vec(number, 0..6),
        prop::collection::vec(category(), 0..5),
        "\\PC{0,60}",
    )
        .prop_map(|(claims, numbers, cats, narrative)| {
            let mut doc = ReportDocument::empty("run-p", "NoveltyAssessment", input());
            for (i, (id, statement, keywords, grounded)) in claims.into_iter().enumerate() {
                doc.claims.push(Claim {
                    id: format!("{id}{i}"),
                    statement,
                    evidence: vec![],
                    keywords,
                    has_evidence_grounding: grounded,
                    origin: ClaimOrigin::Automated,
                });
            }
            doc.analyses.push(AnalysisSummary {
                metadata_digest: "d".into(),
                findings: vec![Finding {
                    tool: "t".into(),
                    numbers: numbers.into_iter().map(|(n, v, u)| KeyNumber::new(n, v, u)).collect(),
                    observations: vec![],
                    artifacts: vec![],
                }],
                narrative,
                number_mismatches: vec![],
            });
            for (i, c) in cats.into_iter().enumerate() {
                doc.assessments.push(NoveltyAssessment {
                    claim_id: format!("c{i}"),
                    literature_report: "r".into(),
                    citations: vec![],
                    category: c,
                    justification: String::new(),
                    score: score_category(c),
                });
            }
            doc
        })
}

proptest! {
    #[test]
    fn canonical_round_trip_is_identity(doc in arb_report()) {
        let bytes = canonical_serialize(&doc).unwrap();
        let back: ReportDocument = canonical_parse(&bytes).unwrap();
        prop_assert_eq!(&back, &doc);
        prop_assert_eq!(canonical_serialize(&back).unwrap(), bytes);
    }

    #[test]
    fn rubric_consistency_is_local(c in category()) {
        let a = NoveltyAssessment {
            claim_id: "x".into(), literature_report: String::new(), citations: vec!["ref".into()],
            category: c, justification: String::new(), score: score_category(c),
        };
        prop_assert!((1..=5).contains(&a.score));
    }
}
