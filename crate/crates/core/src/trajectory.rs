use std::fmt::Write as _;

use serde::Serialize;

use crate::model::CorrelationState;

/// Header of the trajectory CSV export.
pub const TRAJECTORY_CSV_HEADER: &str = "t,m1,m2";

/// Overlap time series of one SGD run or population flow.
///
/// `sup_abs_m1` is maintained over every step passed to [`Trajectory::observe`],
/// not only the recorded ones.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<usize>,
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    pub final_state: CorrelationState,
    pub sup_abs_m1: f64,
}

impl Trajectory {
    /// Starts a trajectory with the state at step 0 recorded.
    pub fn start(init: CorrelationState) -> Self {
        Self {
            times: vec![0],
            m1: vec![init.m1],
            m2: vec![init.m2],
            final_state: init,
            sup_abs_m1: init.m1.abs(),
        }
    }

    /// Registers the state after step `t`; stores it when `record` is set.
    #[inline]
    pub fn observe(&mut self, t: usize, state: CorrelationState, record: bool) {
        self.final_state = state;
        self.sup_abs_m1 = self.sup_abs_m1.max(state.m1.abs());
        if record && self.times.last() != Some(&t) {
            self.times.push(t);
            self.m1.push(state.m1);
            self.m2.push(state.m2);
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn states(&self) -> impl Iterator<Item = (usize, CorrelationState)> + '_ {
        self.times
            .iter()
            .zip(self.m1.iter().zip(&self.m2))
            .map(|(&t, (&m1, &m2))| (t, CorrelationState { m1, m2 }))
    }

    /// `t,m1,m2` CSV with one row per recorded step. Floats use the shortest
    /// round-trip representation, so equal trajectories give equal bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * (self.len() + 1));
        out.push_str(TRAJECTORY_CSV_HEADER);
        out.push('\n');
        for (t, s) in self.states() {
            let _ = writeln!(out, "{t},{},{}", s.m1, s.m2);
        }
        out
    }
}
