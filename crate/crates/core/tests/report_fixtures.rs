mod common;

use common::*;
use hemobench::report::{
    default_references, render_comparison_table, render_confusion, BenchmarkReport, ConfusionView,
};
use hemobench::{ClassTaxonomy, Fraction};

#[test]
fn ensemble_fixture_fractions() {
    let r = result("Ensemble", "ensemble", ensemble_fixture());
    assert_eq!(r.overall_accuracy, Fraction::new(2044, 2054));
    assert_eq!(
        r.classwise_accuracy[NEUTROPHIL],
        Some(Fraction::new(395, 400))
    );
    assert_eq!(r.classwise_accuracy[IG], Some(Fraction::new(345, 348)));
    assert_eq!(r.per_class[IG].precision, Some(Fraction::new(345, 350)));
    let a = &r.aggregate;
    let shown = [
        &r.overall_accuracy,
        &a.precision,
        &a.sensitivity,
        &a.specificity,
    ]
    .map(|f| f.percent(2));
    assert_eq!(shown, ["99.51", "99.47", "99.58", "99.93"]);
}

#[test]
fn comparison_keeps_member_order_and_bolds_ensemble() {
    let members = vec![
        result("Wide ResNet-50-2", "wide_resnet50_2", wrn50_fixture()),
        result(
            "ResNet-34",
            "resnet34",
            support_matrix(&[(NEUTROPHIL, IG, 17)]),
        ),
    ];
    let ens = result("Ensemble", "ensemble", ensemble_fixture());
    let table = render_comparison_table(&members, &ens, &default_references()).unwrap();
    let methods: Vec<&str> = table.rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(methods[3..], ["Wide ResNet-50-2", "ResNet-34", "Ensemble"]);
    assert_eq!(table.rows[3].values[0], "99.32");
    let md = table.to_markdown();
    assert!(
        md.ends_with("| **Ensemble** | **99.51** | **99.47** | **99.58** | **99.93** |\n"),
        "{md}"
    );
}

#[test]
fn neutrophil_row_percentages() {
    let grid = render_confusion(
        &ensemble_fixture(),
        &ClassTaxonomy::canonical(),
        ConfusionView::RowPercent,
    );
    let row = &grid.cells[NEUTROPHIL];
    assert_eq!(row[NEUTROPHIL], "98.75");
    assert_eq!(row[IG], "1.25");
    assert!(row
        .iter()
        .enumerate()
        .all(|(i, c)| i == NEUTROPHIL || i == IG || c == "0.00"));
}

#[test]
fn full_report_mentions_every_model() {
    let members = vec![result(
        "Wide ResNet-50-2",
        "wide_resnet50_2",
        wrn50_fixture(),
    )];
    let ens = result("Ensemble", "ensemble", ensemble_fixture());
    let report = BenchmarkReport::build(
        members,
        Some((ens, vec!["Wide ResNet-50-2".to_string()])),
        &default_references(),
        vec!["note".to_string()],
        serde_json::json!({ "seed": 1 }),
    )
    .unwrap();
    let md = report.to_markdown();
    assert!(
        md.contains("### Wide ResNet-50-2") && md.contains("### Ensemble") && md.contains("- note")
    );
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv
        .lines()
        .nth(2)
        .unwrap()
        .starts_with("Ensemble,ensemble,ensemble,"));

    let missing = BenchmarkReport::build(
        vec![],
        Some((
            result("Ensemble", "ensemble", ensemble_fixture()),
            vec!["ghost".to_string()],
        )),
        &default_references(),
        vec![],
        serde_json::json!({}),
    );
    assert!(missing.is_err());
}
