mod common;

fn check(result: common::Check) {
    match result {
        Ok(summary) => println!("{summary}"),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn adjacency_is_symmetric() {
    check(common::adjacency_symmetry());
}

#[test]
fn is_tree_agrees_with_union_find() {
    check(common::is_tree_matches_union_find());
}

#[test]
fn geometric_edges_match_distance_scan() {
    check(common::geometric_edges_match_scan());
}

#[test]
fn expected_degree_is_unbiased() {
    check(common::expected_degree_mean());
}
