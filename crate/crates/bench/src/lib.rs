//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use gradflow_core::{project_l2, temporal_case, DgOperator, DgSpace, ModelSpec, SavState};

/// The temporal manufactured case on an `n x n` mesh with `P^k`.
pub struct Fixture {
    pub space: Arc<DgSpace>,
    pub model: ModelSpec,
    pub op: DgOperator,
    pub state: SavState,
}

impl Fixture {
    pub fn new(n: usize, k: usize) -> Self {
        let case = temporal_case();
        let space = DgSpace::new(case.mesh(n).expect("mesh"), k).expect("space");
        let model = case.model();
        let op = DgOperator::new(&space, model.a).expect("operator");
        let u0 = project_l2(&space, |x| case.initial(x));
        let state = SavState::initial(u0, &op, &model, 0.0).expect("initial state");
        Self { space, model, op, state }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_sizes() {
        let f = Fixture::new(4, 1);
        assert_eq!(f.space.n_dofs(), 48);
        assert!(f.state.r > 0.0);
    }
}
