//! Fixed-seed snapshots. Regenerate with `RALAB_BLESS=1 cargo test --test golden`.

use std::path::PathBuf;

use ralab::graphs::{generate_er, greedy_color_largest_first, Graph};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

#[test]
fn er_15_half_seed_42_edge_list() {
    let g = generate_er(15, 0.5, 42).unwrap();
    let path = data("er_n15_p0.5_seed42.json");
    if std::env::var_os("RALAB_BLESS").is_some() {
        g.save(&path).unwrap();
    }
    let golden = Graph::load(&path).unwrap();
    assert_eq!(g, golden);
    // Canonical order survives the file round trip.
    assert!(golden.edges().windows(2).all(|w| w[0] < w[1]));
    let greedy = greedy_color_largest_first(&golden);
    assert!(golden.is_proper_coloring(&greedy.coloring));
}
