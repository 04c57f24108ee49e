mod common;

fn check(result: common::Check) {
    match result {
        Ok(summary) => println!("{summary}"),
        Err(e) => panic!("{e}"),
    }
}


#[test]
fn shards_partition_rows() {
    check(common::sharding_partition());
}

#[test]
fn codebook_is_stable() {
    check(common::codebook_stable());
}
