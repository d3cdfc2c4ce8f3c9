use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAction {
    Up = 0,
    Left = 1,
    Right = 2,
    Down = 3,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [
        GridAction::Up,
        GridAction::Left,
        GridAction::Right,
        GridAction::Down,
    ];
}

/// Deterministic grid world with a +1 reward for acting in one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridWorldSpec {
    pub rows: usize,
    pub cols: usize,
    pub reward_col: usize,
    pub gamma: f64,
}

impl Default for GridWorldSpec {
    fn default() -> Self {
        Self {
            rows: 30,
            cols: 3,
            reward_col: 2,
            gamma: 0.9,
        }
    }
}

impl GridWorldSpec {
    pub fn state(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn num_states(&self) -> usize {
        self.rows * self.cols
    }
}

/// Builds the grid world; moves into a wall leave the agent in place.
pub fn make_grid_world(spec: &GridWorldSpec) -> Result<TabularMdp> {
    if spec.rows == 0 || spec.cols == 0 || spec.reward_col >= spec.cols {
        return Err(Error::Argument(format!(
            "invalid grid {}x{} with reward column {}",
            spec.rows, spec.cols, spec.reward_col
        )));
    }
    let ns = spec.num_states();
    let mut transitions = Vec::with_capacity(4);
    let mut rewards = Vec::with_capacity(4);
    for action in GridAction::ALL {
        let mut p = DMatrix::zeros(ns, ns);
        for row in 0..spec.rows {
            for col in 0..spec.cols {
                let (r2, c2) = match action {
                    GridAction::Up => (row.saturating_sub(1), col),
                    GridAction::Down => ((row + 1).min(spec.rows - 1), col),
                    GridAction::Left => (row, col.saturating_sub(1)),
                    GridAction::Right => (row, (col + 1).min(spec.cols - 1)),
                };
                p[(spec.state(row, col), spec.state(r2, c2))] = 1.0;
            }
        }
        transitions.push(p);
        rewards.push(DVector::from_fn(ns, |s, _| {
            if s % spec.cols == spec.reward_col {
                1.0
            } else {
                0.0
            }
        }));
    }
    TabularMdp::new(transitions, rewards, spec.gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_grid_is_absorbing() {
        let spec = GridWorldSpec {
            rows: 1,
            cols: 1,
            reward_col: 0,
            gamma: 0.9,
        };
        let mdp = make_grid_world(&spec).unwrap();
        assert_eq!(mdp.num_states(), 1);
        for a in 0..4 {
            assert_eq!(mdp.transition(a)[(0, 0)], 1.0);
            assert_eq!(mdp.reward(a)[0], 1.0);
        }
    }

    #[test]
    fn default_grid_shape_and_rewards() {
        let spec = GridWorldSpec::default();
        let mdp = make_grid_world(&spec).unwrap();
        assert_eq!(mdp.num_states(), 90);
        assert_eq!(mdp.num_actions(), 4);
        let total: f64 = mdp.reward(0).iter().sum();
        assert_eq!(total, 30.0);
        // moving up from the top row stays put
        assert_eq!(
            mdp.transition(GridAction::Up as usize)[(spec.state(0, 1), spec.state(0, 1))],
            1.0
        );
        assert_eq!(
            mdp.transition(GridAction::Right as usize)[(spec.state(5, 0), spec.state(5, 1))],
            1.0
        );
    }

    #[test]
    fn invalid_spec_rejected() {
        let spec = GridWorldSpec {
            reward_col: 3,
            ..GridWorldSpec::default()
        };
        assert!(make_grid_world(&spec).is_err());
    }
}
