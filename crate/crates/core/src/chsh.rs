//! CHSH game semantics: strategies, Born-rule winning probability, and ω ↔ β.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{kron, BellState, CMatrix, DensityMatrix, Observable, TwoQubitState};

/// (2 + √2)/4, the quantum optimum.
pub const OMEGA_MAX: f64 = 0.853_553_390_593_273_8;
/// Best classical winning probability.
pub const OMEGA_CLASSICAL: f64 = 0.75;
pub const BETA_MAX: f64 = std::f64::consts::SQRT_2 * 2.0;

pub fn omega_from_beta(beta: f64) -> f64 {
    0.5 + beta / 8.0
}

pub fn beta_from_omega(omega: f64) -> f64 {
    8.0 * omega - 4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameScore {
    pub omega: f64,
    pub beta: f64,
}

impl GameScore {
    pub fn from_omega(omega: f64) -> Self {
        Self {
            omega,
            beta: beta_from_omega(omega),
        }
    }

    pub fn is_quantum_realizable(&self) -> bool {
        self.beta.abs() <= BETA_MAX + 1e-12
    }
}

/// A shared state together with two binary observables per party.
///
/// The state lives on `alice_dim ⊗ bob_dim`, with Alice as the most significant factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    state: DensityMatrix,
    alice: [Observable; 2],
    bob: [Observable; 2],
}

impl Strategy {
    pub fn new(state: DensityMatrix, alice: [Observable; 2], bob: [Observable; 2]) -> Result<Self> {
        let da = alice[0].dim();
        let db = bob[0].dim();
        if alice[1].dim() != da {
            return Err(Error::DimensionMismatch(alice[1].dim(), da));
        }
        if bob[1].dim() != db {
            return Err(Error::DimensionMismatch(bob[1].dim(), db));
        }
        if state.dim() != da * db {
            return Err(Error::DimensionMismatch(state.dim(), da * db));
        }
        Ok(Self { state, alice, bob })
    }

    pub fn two_qubit(
        state: TwoQubitState,
        alice: [Observable; 2],
        bob: [Observable; 2],
    ) -> Result<Self> {
        Self::new(state.density().clone(), alice, bob)
    }

    pub fn state(&self) -> &DensityMatrix {
        &self.state
    }

    pub fn alice(&self) -> &[Observable; 2] {
        &self.alice
    }

    pub fn bob(&self) -> &[Observable; 2] {
        &self.bob
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.alice[0].dim(), self.bob[0].dim())
    }

    pub fn with_state(&self, state: DensityMatrix) -> Result<Self> {
        Self::new(state, self.alice.clone(), self.bob.clone())
    }

    /// Born probabilities P(a, b | x, y), indexed `[x][y][a][b]`.
    pub fn born_table(&self) -> [[[[f64; 2]; 2]; 2]; 2] {
        let mut table = [[[[0.0; 2]; 2]; 2]; 2];
        for x in 0..2 {
            for y in 0..2 {
                for a in 0..2u8 {
                    for b in 0..2u8 {
                        let op: CMatrix =
                            kron(&self.alice[x].projector(a), &self.bob[y].projector(b));
                        table[x][y][a as usize][b as usize] = self.state.expectation(&op).max(0.0);
                    }
                }
            }
        }
        table
    }

    /// ⟨A_x ⊗ B_y⟩.
    pub fn correlator(&self, x: usize, y: usize) -> f64 {
        self.state
            .expectation(&kron(self.alice[x].matrix(), self.bob[y].matrix()))
    }

    /// β = ⟨A0B0⟩ + ⟨A0B1⟩ + ⟨A1B0⟩ − ⟨A1B1⟩.
    pub fn chsh_value(&self) -> f64 {
        self.correlator(0, 0) + self.correlator(0, 1) + self.correlator(1, 0)
            - self.correlator(1, 1)
    }
}

/// Exact winning probability under uniform inputs.
pub fn winning_probability(strategy: &Strategy) -> GameScore {
    let table = strategy.born_table();
    let mut omega = 0.0;
    for (x, row) in table.iter().enumerate() {
        for (y, cell) in row.iter().enumerate() {
            for a in 0..2 {
                for b in 0..2 {
                    if (a ^ b) == (x & y) {
                        omega += 0.25 * cell[a][b];
                    }
                }
            }
        }
    }
    GameScore::from_omega(omega)
}

/// |Φ+⟩ with Alice measuring σz, σx and Bob (σz ± σx)/√2.
pub fn optimal_strategy() -> Strategy {
    let state = TwoQubitState::bell(BellState::PhiPlus);
    optimal_observables_on(state)
}

/// The optimal observables applied to an arbitrary two-qubit state.
pub fn optimal_observables_on(state: TwoQubitState) -> Strategy {
    let quarter = std::f64::consts::FRAC_PI_4;
    Strategy::two_qubit(
        state,
        [Observable::sigma_z(), Observable::sigma_x()],
        [
            Observable::in_xz_plane(quarter),
            Observable::in_xz_plane(-quarter),
        ],
    )
    .expect("qubit observables match a two-qubit state")
}

/// Deterministic local strategy: party outputs are fixed bits per input.
///
/// `alice[x]` and `bob[y]` are the output bits; observables are ±I.
pub fn deterministic_strategy(alice: [u8; 2], bob: [u8; 2]) -> Strategy {
    let obs = |bit: u8| {
        if bit == 0 {
            Observable::identity(2)
        } else {
            Observable::identity(2).negated()
        }
    };
    Strategy::two_qubit(
        TwoQubitState::maximally_mixed(),
        [obs(alice[0]), obs(alice[1])],
        [obs(bob[0]), obs(bob[1])],
    )
    .expect("qubit observables match a two-qubit state")
}

/// All 16 deterministic local strategies.
pub fn all_deterministic_strategies() -> Vec<Strategy> {
    (0..16u8)
        .map(|k| deterministic_strategy([k & 1, (k >> 1) & 1], [(k >> 2) & 1, (k >> 3) & 1]))
        .collect()
}
