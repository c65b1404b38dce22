mod common;

use proptest::prelude::*;

use recurtc::linearize::linearize_plan;
use recurtc::structure::{grid, perfect, GenParams};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn invariants_hold_on_fuzzed_structures(seed in any::<u64>()) {
        let (decl, ds) = common::fuzz_structure(seed);
        if let Err(e) = common::check_structure(&decl, &ds) {
            return Err(TestCaseError::fail(e));
        }
    }
}

#[test]
fn batch_counts() {
    let p = GenParams::default();
    let plan = common::plans()[0];
    let (d, ds) = perfect(8, p);
    let lin = linearize_plan(&d, &ds, plan).unwrap();
    assert_eq!(ds.len(), 255);
    assert_eq!(lin.all_batches().len(), 8);
    let (d, ds) = grid(10, 10, p);
    let lin = linearize_plan(&d, &ds, plan).unwrap();
    assert_eq!(lin.internal_batches.len(), 18);
}
