mod common;

use common::{config, inclusions};
use proptest::prelude::*;

fn run(p: common::Property, k: usize, seed: u64) -> Result<(), TestCaseError> {
    p(k, seed).map_err(TestCaseError::fail)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn interchange_law(k in 0..inclusions().len(), seed in any::<u64>()) {
        run(common::interchange, k, seed)?;
    }

    #[test]
    fn pp_expansion_identity(k in 0..inclusions().len(), seed in any::<u64>()) {
        run(common::pp_expansion, k, seed)?;
    }

    #[test]
    fn pp_bound_dominates_inverse_index(k in 0..inclusions().len(), seed in any::<u64>()) {
        run(common::pp_bound, k, seed)?;
    }

    #[test]
    fn multiplicative_domain_is_n(k in 0..inclusions().len(), seed in any::<u64>()) {
        run(common::multiplicative_domain_is_n, k, seed)?;
    }

    #[test]
    fn index_values_central_and_at_least_one(k in 0..inclusions().len(), seed in any::<u64>()) {
        run(common::index_central, k, seed)?;
    }

    #[test]
    fn parity_containment(k in 0..inclusions().len(), seed in any::<u64>()) {
        run(common::parity_containment, k, seed)?;
    }
}
