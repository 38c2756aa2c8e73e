//! Structural checks for the vendored network fixtures.

use bnl_core::bayesnet::{load_param_network, parse_bif, render_bif};
use bnl_core::coeff::decimal_fixed;
use std::path::Path;

fn fixture(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name);
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

#[test]
fn bif_fixtures_have_the_expected_structure() {
    let expected = [
        ("earthquake.bif", 5, 4, "2.00"),
        ("cancer.bif", 5, 4, "2.00"),
        ("survey.bif", 6, 6, "2.67"),
        ("asia.bif", 8, 8, "2.50"),
        ("sachs.bif", 11, 17, "3.09"),
    ];
    for (file, nodes, edges, avg_mb) in expected {
        let net = parse_bif(&fixture(file)).unwrap_or_else(|e| panic!("{file}: {e}"));
        assert_eq!(net.node_count(), nodes, "{file} node count");
        assert_eq!(net.edge_count(), edges, "{file} edge count");
        assert_eq!(
            decimal_fixed(&net.markov_blanket_avg(), 2),
            avg_mb,
            "{file} average Markov blanket"
        );
        assert!(net.inputs().is_empty(), "{file} must be fully specified");
        // Round-trip: parse ∘ render ∘ parse is a fixed point.
        let rendered = render_bif(&net).unwrap();
        assert_eq!(parse_bif(&rendered).unwrap(), net, "{file} round-trip");
    }
}

#[test]
fn json_fixtures_load() {
    let mood = load_param_network(&fixture("mood.json")).unwrap();
    assert_eq!(mood.node_count(), 4);
    assert_eq!(mood.edge_count(), 3);
    assert!(mood.params().is_empty());

    let sprinkler = load_param_network(&fixture("sprinkler.json")).unwrap();
    assert_eq!(sprinkler.node_count(), 3);
    assert_eq!(sprinkler.edge_count(), 3);
    assert_eq!(sprinkler.params().names(), &["a".to_string()]);
}
