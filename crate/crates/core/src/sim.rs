//! Sequential Monte Carlo runs of the test protocol and its projected-and-twirled variant.
//!
//! Randomness is counter based: every draw is a pure function of
//! (master seed, round index, purpose tag, slot), so test flags, inputs,
//! outcomes and block indices come from independent streams and a transcript
//! is reproducible from its seed alone. Devices get their own ChaCha8 stream
//! per round, created on first use.

use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chsh::{deterministic_strategy, optimal_observables_on, Strategy};
use crate::error::{Error, Result};
use crate::quantum::{
    bell_off_diagonal, bell_spectrum, kron, twirl, werner_state, CMatrix, CVector, JordanBlock,
    Observable, TwoQubitState, MAX_LOCAL_DIM,
};
use crate::rates::{completeness_bound, ProtocolParams};

/// Born table P(a, b | x, y) indexed `[x][y][a][b]`.
pub type BornTable = [[[[f64; 2]; 2]; 2]; 2];

const Z_95: f64 = 1.959_963_984_540_054;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Purposes of the independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Test = 1,
    InputX = 2,
    InputY = 3,
    Outcome = 4,
    Block = 5,
    Device = 6,
    Trial = 7,
}

/// Mixes (seed, round, stream, slot) into a 64-bit word.
pub fn stream_word(seed: u64, round: u64, stream: Stream, slot: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ round);
    h = splitmix64(h ^ (stream as u64));
    splitmix64(h ^ slot)
}

/// Uniform draw in [0, 1) from 53 mixed bits.
pub fn stream_uniform(seed: u64, round: u64, stream: Stream, slot: u64) -> f64 {
    (stream_word(seed, round, stream, slot) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Seed of trial `k` derived from a master seed.
pub fn trial_seed(seed: u64, k: u64) -> u64 {
    stream_word(seed, k, Stream::Trial, 0)
}

/// Per-round device randomness; the ChaCha8 state is only built if the device draws.
pub struct DeviceRng {
    seed: u64,
    inner: Option<ChaCha8Rng>,
}

impl DeviceRng {
    fn new(seed: u64, round: u64) -> Self {
        Self {
            seed: stream_word(seed, round, Stream::Device, 0),
            inner: None,
        }
    }

    fn rng(&mut self) -> &mut ChaCha8Rng {
        let seed = self.seed;
        self.inner
            .get_or_insert_with(|| ChaCha8Rng::seed_from_u64(seed))
    }
}

impl RngCore for DeviceRng {
    fn next_u32(&mut self) -> u32 {
        self.rng().next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng().next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng().fill_bytes(dst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Standard,
    /// Jordan projection to qubit blocks and twirling of the kept pair.
    Modified,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Standard => "standard",
            Mode::Modified => "modified",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Mode::Standard),
            "modified" => Ok(Mode::Modified),
            other => Err(Error::InvalidParameters(format!(
                "unknown protocol mode '{other}' (expected standard or modified)"
            ))),
        }
    }
}

/// When the block indices are drawn in the modified protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionTiming {
    /// Before the test flag: outcomes come from the projected qubit pair.
    #[default]
    BeforeTestDraw,
    /// After the test flag and any measurement: outcomes come from the full
    /// state and (c, d) is drawn from its distribution given the outcomes.
    AfterTestDraw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    pub mode: Mode,
    pub timing: ProjectionTiming,
    /// Keep the twirled pair of every non-test round (modified mode only).
    pub record_kept_states: bool,
}

impl RunOptions {
    pub fn standard() -> Self {
        Self {
            mode: Mode::Standard,
            timing: ProjectionTiming::BeforeTestDraw,
            record_kept_states: false,
        }
    }

    pub fn modified() -> Self {
        Self {
            mode: Mode::Modified,
            timing: ProjectionTiming::BeforeTestDraw,
            record_kept_states: true,
        }
    }

    pub fn for_mode(mode: Mode) -> Self {
        match mode {
            Mode::Standard => Self::standard(),
            Mode::Modified => Self::modified(),
        }
    }
}

/// Classical registers of one round; `None` encodes ⊥.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassicalRound {
    pub t: u8,
    pub x: Option<u8>,
    pub y: Option<u8>,
    pub a: Option<u8>,
    pub b: Option<u8>,
    pub w: Option<u8>,
    pub c: Option<u16>,
    pub d: Option<u16>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: u8,
    pub x: Option<u8>,
    pub y: Option<u8>,
    pub a: Option<u8>,
    pub b: Option<u8>,
    pub w: Option<u8>,
    pub c: Option<u16>,
    pub d: Option<u16>,
    /// The twirled qubit pair Â B̂ of a non-test round in modified mode.
    pub kept_state: Option<Arc<TwoQubitState>>,
}

impl RoundRecord {
    pub fn classical(&self) -> ClassicalRound {
        ClassicalRound {
            t: self.t,
            x: self.x,
            y: self.y,
            a: self.a,
            b: self.b,
            w: self.w,
            c: self.c,
            d: self.d,
        }
    }

    fn from_classical(r: ClassicalRound) -> Self {
        Self {
            t: r.t,
            x: r.x,
            y: r.y,
            a: r.a,
            b: r.b,
            w: r.w,
            c: r.c,
            d: r.d,
            kept_state: None,
        }
    }
}

/// Read-only view of the classical registers of earlier rounds.
#[derive(Clone, Copy)]
pub struct History<'a> {
    rounds: &'a [RoundRecord],
}

impl<'a> History<'a> {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<ClassicalRound> {
        self.rounds.get(i).map(RoundRecord::classical)
    }

    pub fn last(&self) -> Option<ClassicalRound> {
        self.rounds.last().map(RoundRecord::classical)
    }

    pub fn iter(&self) -> impl Iterator<Item = ClassicalRound> + 'a {
        self.rounds.iter().map(RoundRecord::classical)
    }

    pub fn test_rounds(&self) -> usize {
        self.rounds.iter().filter(|r| r.t == 1).count()
    }

    pub fn wins(&self) -> usize {
        self.rounds.iter().filter(|r| r.w == Some(1)).count()
    }
}

struct BlockCell {
    c: u16,
    d: u16,
    prob: f64,
    born: BornTable,
    kept: Arc<TwoQubitState>,
}

struct BlockStructure {
    cells: Vec<BlockCell>,
}

/// The source state and measurements used in one round, with lazily built caches.
pub struct RoundDevice {
    strategy: Strategy,
    born: OnceLock<BornTable>,
    blocks: OnceLock<std::result::Result<BlockStructure, Error>>,
}

impl RoundDevice {
    pub fn new(strategy: Strategy) -> Result<Self> {
        let (da, db) = strategy.dims();
        for d in [da, db] {
            if d > MAX_LOCAL_DIM {
                return Err(Error::InvalidParameters(format!(
                    "local dimension {d} exceeds the supported maximum {MAX_LOCAL_DIM}"
                )));
            }
        }
        Ok(Self {
            strategy,
            born: OnceLock::new(),
            blocks: OnceLock::new(),
        })
    }

    pub fn strategy(&self) -> &Strategy {
        &self.strategy
    }

    pub fn born(&self) -> &BornTable {
        self.born.get_or_init(|| self.strategy.born_table())
    }

    fn blocks(&self) -> Result<&BlockStructure> {
        self.blocks
            .get_or_init(|| build_blocks(&self.strategy))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Block-pair probabilities P(c, d) of the Jordan projection.
    pub fn block_probabilities(&self) -> Result<Vec<((u16, u16), f64)>> {
        Ok(self
            .blocks()?
            .cells
            .iter()
            .map(|cell| ((cell.c, cell.d), cell.prob))
            .collect())
    }

    /// Twirled projected pair for the block indices (c, d).
    pub fn kept_state(&self, c: u16, d: u16) -> Result<Option<Arc<TwoQubitState>>> {
        Ok(self
            .blocks()?
            .cells
            .iter()
            .find(|cell| cell.c == c && cell.d == d)
            .map(|cell| cell.kept.clone()))
    }
}

/// Orthonormal basis of a block obtained by Gram–Schmidt on its projector applied
/// to the computational basis, so a qubit device keeps its own frame.
pub fn block_frame(block: &JordanBlock) -> CMatrix {
    let p = block.projector();
    let dim = p.nrows();
    let mut cols: Vec<CVector> = Vec::with_capacity(2);
    for k in 0..dim {
        let mut v: CVector = p.column(k).into_owned();
        for u in &cols {
            let overlap = u.dotc(&v);
            v -= u * overlap;
        }
        let norm = v.norm();
        if norm > 1e-6 {
            cols.push(v.unscale(norm));
            if cols.len() == 2 {
                break;
            }
        }
    }
    CMatrix::from_columns(&cols)
}

fn build_blocks(strategy: &Strategy) -> Result<BlockStructure> {
    use crate::quantum::jordan_blocks;
    let [a0, a1] = strategy.alice();
    let [b0, b1] = strategy.bob();
    let alice = jordan_blocks(a0, a1)?;
    let bob = jordan_blocks(b0, b1)?;
    let rho = strategy.state().matrix();
    let mut cells = Vec::new();
    for (ci, va) in alice.iter().enumerate() {
        for (di, vb) in bob.iter().enumerate() {
            let (fa, fb) = (block_frame(va), block_frame(vb));
            let iso = kron(&fa, &fb);
            let sub = iso.adjoint() * rho * &iso;
            let prob = sub.trace().re;
            if prob <= 1e-15 {
                continue;
            }
            let projected = TwoQubitState::new(sub.unscale(prob))?;
            let restricted =
                |obs: &Observable, frame: &CMatrix| Observable::new(obs.restrict(frame));
            let local = Strategy::two_qubit(
                projected.clone(),
                [restricted(a0, &fa)?, restricted(a1, &fa)?],
                [restricted(b0, &fb)?, restricted(b1, &fb)?],
            )?;
            cells.push(BlockCell {
                c: ci as u16,
                d: di as u16,
                prob,
                born: local.born_table(),
                kept: Arc::new(twirl(&projected)),
            });
        }
    }
    Ok(BlockStructure { cells })
}

/// A possibly adaptive source-and-measurement model.
///
/// `round` sees only the classical history; it returns the state and observables
/// used in round `index`.
pub trait DeviceModel: Send + Sync {
    fn name(&self) -> String;
    fn round(
        &self,
        index: u64,
        history: History<'_>,
        rng: &mut DeviceRng,
    ) -> Result<Arc<RoundDevice>>;
}

/// The same strategy in every round.
pub struct HonestIid {
    device: Arc<RoundDevice>,
}

impl HonestIid {
    pub fn new(strategy: Strategy) -> Result<Self> {
        Ok(Self {
            device: Arc::new(RoundDevice::new(strategy)?),
        })
    }

    /// Optimal observables on the Werner state with parameter ξ.
    pub fn werner(xi: f64) -> Result<Self> {
        Self::new(optimal_observables_on(werner_state(xi)?))
    }

    /// Optimal observables on the Werner state whose winning probability is `omega`.
    pub fn with_winning_probability(omega: f64) -> Result<Self> {
        Self::werner(werner_xi_for_omega(omega)?)
    }

    pub fn device(&self) -> &Arc<RoundDevice> {
        &self.device
    }
}

/// ξ such that Werner(ξ) with optimal observables wins with probability ω.
pub fn werner_xi_for_omega(omega: f64) -> Result<f64> {
    let xi = 1.0 - (omega - 0.5) * 4.0 / std::f64::consts::SQRT_2;
    crate::error::check_range(
        "omega",
        omega,
        0.5,
        crate::chsh::OMEGA_MAX,
        "[0.5, (2+sqrt(2))/4]",
    )?;
    Ok(xi.clamp(0.0, 1.0))
}

impl DeviceModel for HonestIid {
    fn name(&self) -> String {
        "honest-iid".into()
    }

    fn round(&self, _: u64, _: History<'_>, _: &mut DeviceRng) -> Result<Arc<RoundDevice>> {
        Ok(self.device.clone())
    }
}

/// Fixed output bits per input, regardless of history.
pub struct ClassicalDeterministic {
    device: Arc<RoundDevice>,
    table: ([u8; 2], [u8; 2]),
}

impl ClassicalDeterministic {
    pub fn new(alice: [u8; 2], bob: [u8; 2]) -> Result<Self> {
        if alice.iter().chain(&bob).any(|&b| b > 1) {
            return Err(Error::InvalidParameters(
                "output table entries must be bits".into(),
            ));
        }
        Ok(Self {
            device: Arc::new(RoundDevice::new(deterministic_strategy(alice, bob))?),
            table: (alice, bob),
        })
    }
}

impl DeviceModel for ClassicalDeterministic {
    fn name(&self) -> String {
        let (a, b) = self.table;
        format!("classical-deterministic[{}{}{}{}]", a[0], a[1], b[0], b[1])
    }

    fn round(&self, _: u64, _: History<'_>, _: &mut DeviceRng) -> Result<Arc<RoundDevice>> {
        Ok(self.device.clone())
    }
}

/// How a [`MemorySwitcher`] picks between its strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwitchRule {
    /// Primary on even round indices.
    EvenRounds,
    /// Primary while the number of earlier test rounds is even.
    TestParity,
    /// Fallback in the round right after a lost test round.
    AfterLoss,
}

/// Alternates two strategies according to the classical history.
pub struct MemorySwitcher {
    primary: Arc<RoundDevice>,
    fallback: Arc<RoundDevice>,
    rule: SwitchRule,
}

impl MemorySwitcher {
    pub fn new(primary: Strategy, fallback: Strategy, rule: SwitchRule) -> Result<Self> {
        Ok(Self {
            primary: Arc::new(RoundDevice::new(primary)?),
            fallback: Arc::new(RoundDevice::new(fallback)?),
            rule,
        })
    }
}

impl DeviceModel for MemorySwitcher {
    fn name(&self) -> String {
        "memory-switcher".into()
    }

    fn round(
        &self,
        index: u64,
        history: History<'_>,
        _: &mut DeviceRng,
    ) -> Result<Arc<RoundDevice>> {
        let primary = match self.rule {
            SwitchRule::EvenRounds => index % 2 == 0,
            SwitchRule::TestParity => history.test_rounds() % 2 == 0,
            SwitchRule::AfterLoss => history.last().is_none_or(|r| r.w != Some(0)),
        };
        Ok(if primary {
            self.primary.clone()
        } else {
            self.fallback.clone()
        })
    }
}

/// Werner states whose noise grows linearly with the round index.
pub struct NoisyDrift {
    xi_start: f64,
    xi_step: f64,
}

impl NoisyDrift {
    pub fn new(xi_start: f64, xi_step: f64) -> Result<Self> {
        crate::error::check_range("xi_start", xi_start, 0.0, 1.0, "[0, 1]")?;
        if !xi_step.is_finite() || xi_step < 0.0 {
            return Err(Error::OutOfRange {
                name: "xi_step",
                value: xi_step,
                range: "[0, inf)",
            });
        }
        Ok(Self { xi_start, xi_step })
    }

    pub fn xi(&self, index: u64) -> f64 {
        (self.xi_start + self.xi_step * index as f64).min(1.0)
    }
}

impl DeviceModel for NoisyDrift {
    fn name(&self) -> String {
        "noisy-drift".into()
    }

    fn round(&self, index: u64, _: History<'_>, _: &mut DeviceRng) -> Result<Arc<RoundDevice>> {
        Ok(Arc::new(RoundDevice::new(optimal_observables_on(
            werner_state(self.xi(index))?,
        ))?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub model: String,
    pub mode: Mode,
    pub seed: u64,
    pub params: ProtocolParams,
    pub rounds: Vec<RoundRecord>,
    pub win_count: u64,
    pub aborted: bool,
}

impl Transcript {
    pub fn test_rounds(&self) -> u64 {
        self.rounds.iter().filter(|r| r.t == 1).count() as u64
    }

    /// Fraction of won test rounds, or `None` without tests.
    pub fn win_rate(&self) -> Option<f64> {
        let t = self.test_rounds();
        (t > 0).then(|| self.win_count as f64 / t as f64)
    }
}

fn bit(u: f64) -> u8 {
    u8::from(u >= 0.5)
}

fn sample_outcome(cell: &[[f64; 2]; 2], u: f64) -> (u8, u8) {
    let mut acc = 0.0;
    let mut last = (0, 0);
    for a in 0..2u8 {
        for b in 0..2u8 {
            let p = cell[a as usize][b as usize];
            if p > 0.0 {
                acc += p;
                last = (a, b);
                if u < acc {
                    return (a, b);
                }
            }
        }
    }
    last
}

fn sample_index<I: Iterator<Item = f64>>(weights: I, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (k, p) in weights.enumerate() {
        if p > 0.0 {
            acc += p;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}

/// Runs n rounds sequentially.
pub fn run_protocol(
    model: &dyn DeviceModel,
    params: &ProtocolParams,
    options: RunOptions,
    seed: u64,
) -> Result<Transcript> {
    let mut rounds: Vec<RoundRecord> = Vec::with_capacity(params.n.min(1 << 24) as usize);
    let mut wins = 0u64;
    for i in 0..params.n {
        let mut drng = DeviceRng::new(seed, i);
        let device = model.round(i, History { rounds: &rounds }, &mut drng)?;
        let mut rec = ClassicalRound::default();

        let mut cell_idx = None;
        if options.mode == Mode::Modified && options.timing == ProjectionTiming::BeforeTestDraw {
            let blocks = device.blocks()?;
            let k = sample_index(
                blocks.cells.iter().map(|c| c.prob),
                stream_uniform(seed, i, Stream::Block, 0),
            );
            cell_idx = Some(k);
        }

        let test = stream_uniform(seed, i, Stream::Test, 0) < params.gamma;
        rec.t = u8::from(test);
        let mut kept = None;
        if test {
            let x = bit(stream_uniform(seed, i, Stream::InputX, 0));
            let y = bit(stream_uniform(seed, i, Stream::InputY, 0));
            let u = stream_uniform(seed, i, Stream::Outcome, 0);
            let (a, b) = match cell_idx {
                Some(k) => {
                    let cell = &device.blocks()?.cells[k];
                    sample_outcome(&cell.born[x as usize][y as usize], u)
                }
                None => sample_outcome(&device.born()[x as usize][y as usize], u),
            };
            if options.mode == Mode::Modified && cell_idx.is_none() {
                let blocks = device.blocks()?;
                let (xi, yi, ai, bi) = (x as usize, y as usize, a as usize, b as usize);
                let k = sample_index(
                    blocks.cells.iter().map(|c| c.prob * c.born[xi][yi][ai][bi]),
                    stream_uniform(seed, i, Stream::Block, 0)
                        * blocks
                            .cells
                            .iter()
                            .map(|c| c.prob * c.born[xi][yi][ai][bi])
                            .sum::<f64>(),
                );
                cell_idx = Some(k);
            }
            let w = u8::from((a ^ b) == (x & y));
            wins += u64::from(w);
            rec.x = Some(x);
            rec.y = Some(y);
            rec.a = Some(a);
            rec.b = Some(b);
            rec.w = Some(w);
        } else if options.mode == Mode::Modified {
            let blocks = device.blocks()?;
            let k = match cell_idx {
                Some(k) => k,
                None => sample_index(
                    blocks.cells.iter().map(|c| c.prob),
                    stream_uniform(seed, i, Stream::Block, 0),
                ),
            };
            cell_idx = Some(k);
            if options.record_kept_states {
                kept = Some(blocks.cells[k].kept.clone());
            }
        }
        if let Some(k) = cell_idx {
            let cell = &device.blocks()?.cells[k];
            rec.c = Some(cell.c);
            rec.d = Some(cell.d);
        }
        let mut record = RoundRecord::from_classical(rec);
        record.kept_state = kept;
        rounds.push(record);
    }
    Ok(Transcript {
        model: model.name(),
        mode: options.mode,
        seed,
        params: *params,
        rounds,
        win_count: wins,
        aborted: (wins as f64) < params.abort_threshold(),
    })
}

/// 95% Wilson score interval for k successes in n trials.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = Z_95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortEstimate {
    pub trials: u64,
    pub aborts: u64,
    pub estimate: f64,
    pub interval: (f64, f64),
    pub hoeffding_bound: f64,
    /// Mean over trials of the per-trial test-round win rate (trials without tests are skipped).
    pub win_rate: f64,
}

struct TrialSummary {
    aborted: bool,
    wins: u64,
    tests: u64,
}

fn summarize(t: &Transcript) -> TrialSummary {
    TrialSummary {
        aborted: t.aborted,
        wins: t.win_count,
        tests: t.test_rounds(),
    }
}

/// Runs independent seeded trials and reports the abort fraction with a 95% interval.
pub fn estimate_abort_probability(
    model: &dyn DeviceModel,
    params: &ProtocolParams,
    mode: Mode,
    trials: u64,
    seed: u64,
) -> Result<AbortEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParameters("trials must be at least 1".into()));
    }
    let mut options = RunOptions::for_mode(mode);
    options.record_kept_states = false;
    let summaries = (0..trials)
        .into_par_iter()
        .map(|k| run_protocol(model, params, options, trial_seed(seed, k)).map(|t| summarize(&t)))
        .collect::<Result<Vec<_>>>()?;
    let aborts = summaries.iter().filter(|s| s.aborted).count() as u64;
    let rates: Vec<f64> = summaries
        .iter()
        .filter(|s| s.tests > 0)
        .map(|s| s.wins as f64 / s.tests as f64)
        .collect();
    let win_rate = if rates.is_empty() {
        0.0
    } else {
        rates.iter().sum::<f64>() / rates.len() as f64
    };
    Ok(AbortEstimate {
        trials,
        aborts,
        estimate: aborts as f64 / trials as f64,
        interval: wilson_interval(aborts, trials),
        hoeffding_bound: completeness_bound(params.n, params.delta_est),
        win_rate,
    })
}

/// Index of a round's classical event: 0 for no test, 1 + (x, y, a, b) bits otherwise.
fn event_index(r: &RoundRecord) -> usize {
    match (r.t, r.x, r.y, r.a, r.b) {
        (1, Some(x), Some(y), Some(a), Some(b)) => {
            1 + ((x as usize) << 3 | (y as usize) << 2 | (a as usize) << 1 | b as usize)
        }
        _ => 0,
    }
}

pub const EVENT_COUNT: usize = 17;

/// Label of an event index, e.g. `T=0` or `x=0,y=1,a=1,b=0`.
pub fn event_label(k: usize) -> String {
    if k == 0 {
        "T=0".into()
    } else {
        let e = k - 1;
        format!(
            "x={},y={},a={},b={}",
            e >> 3 & 1,
            e >> 2 & 1,
            e >> 1 & 1,
            e & 1
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventComparison {
    pub event: String,
    pub count_a: u64,
    pub count_b: u64,
    /// |count_a − count_b| in units of the pooled standard deviation of the difference.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub trials: u64,
    pub rounds_per_side: u64,
    pub events: Vec<EventComparison>,
    pub max_z: f64,
    pub abort_a: Option<AbortEstimate>,
    pub abort_b: Option<AbortEstimate>,
    pub intervals_overlap: bool,
    pub passed: bool,
}

fn event_counts(t: &Transcript) -> [u64; EVENT_COUNT] {
    let mut counts = [0u64; EVENT_COUNT];
    for r in &t.rounds {
        counts[event_index(r)] += 1;
    }
    counts
}

fn compare_counts(
    a: &[u64; EVENT_COUNT],
    b: &[u64; EVENT_COUNT],
    total: u64,
) -> Vec<EventComparison> {
    (0..EVENT_COUNT)
        .map(|k| {
            let pooled = (a[k] + b[k]) as f64 / (2 * total) as f64;
            let sd = (2.0 * total as f64 * pooled * (1.0 - pooled)).sqrt();
            let diff = a[k] as f64 - b[k] as f64;
            let z = if sd > 0.0 {
                diff.abs() / sd
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            EventComparison {
                event: event_label(k),
                count_a: a[k],
                count_b: b[k],
                z,
            }
        })
        .collect()
}

fn run_pair_counts(
    model: &dyn DeviceModel,
    params: &ProtocolParams,
    opts: [RunOptions; 2],
    trials: u64,
    seed: u64,
) -> Result<EquivalenceReport> {
    if trials == 0 {
        return Ok(EquivalenceReport {
            trials: 0,
            rounds_per_side: 0,
            events: Vec::new(),
            max_z: 0.0,
            abort_a: None,
            abort_b: None,
            intervals_overlap: true,
            passed: true,
        });
    }
    let results = (0..trials)
        .into_par_iter()
        .map(|k| {
            let s = trial_seed(seed, k);
            let ta = run_protocol(model, params, opts[0], s)?;
            let tb = run_protocol(model, params, opts[1], s)?;
            Ok((event_counts(&ta), ta.aborted, event_counts(&tb), tb.aborted))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ca = [0u64; EVENT_COUNT];
    let mut cb = [0u64; EVENT_COUNT];
    let (mut aa, mut ab) = (0u64, 0u64);
    for (a, xa, b, xb) in &results {
        for k in 0..EVENT_COUNT {
            ca[k] += a[k];
            cb[k] += b[k];
        }
        aa += u64::from(*xa);
        ab += u64::from(*xb);
    }
    let total = trials * params.n;
    let events = compare_counts(&ca, &cb, total);
    let max_z = events.iter().map(|e| e.z).fold(0.0, f64::max);
    let est = |aborts: u64| AbortEstimate {
        trials,
        aborts,
        estimate: aborts as f64 / trials as f64,
        interval: wilson_interval(aborts, trials),
        hoeffding_bound: completeness_bound(params.n, params.delta_est),
        win_rate: f64::NAN,
    };
    let (ea, eb) = (est(aa), est(ab));
    let overlap = ea.interval.0 <= eb.interval.1 && eb.interval.0 <= ea.interval.1;
    let mut ea = ea;
    let mut eb = eb;
    let wins = |c: &[u64; EVENT_COUNT]| -> f64 {
        let (mut w, mut t) = (0u64, 0u64);
        for (k, &n) in c.iter().enumerate().skip(1) {
            let e = k - 1;
            let (x, y, a, b) = (e >> 3 & 1, e >> 2 & 1, e >> 1 & 1, e & 1);
            t += n;
            if a ^ b == x & y {
                w += n;
            }
        }
        if t == 0 {
            0.0
        } else {
            w as f64 / t as f64
        }
    };
    ea.win_rate = wins(&ca);
    eb.win_rate = wins(&cb);
    Ok(EquivalenceReport {
        trials,
        rounds_per_side: total,
        events,
        max_z,
        abort_a: Some(ea),
        abort_b: Some(eb),
        intervals_overlap: overlap,
        passed: max_z <= 3.0 && overlap,
    })
}

/// Compares classical statistics of standard and modified runs on identical seed schedules.
pub fn check_statistics_equivalence(
    model: &dyn DeviceModel,
    params: &ProtocolParams,
    trials: u64,
    seed: u64,
) -> Result<EquivalenceReport> {
    let mut modified = RunOptions::modified();
    modified.record_kept_states = false;
    run_pair_counts(
        model,
        params,
        [RunOptions::standard(), modified],
        trials,
        seed,
    )
}

/// Compares modified runs whose block indices are drawn before and after the test flag.
pub fn check_projection_timing(
    model: &dyn DeviceModel,
    params: &ProtocolParams,
    trials: u64,
    seed: u64,
) -> Result<EquivalenceReport> {
    let before = RunOptions {
        mode: Mode::Modified,
        timing: ProjectionTiming::BeforeTestDraw,
        record_kept_states: false,
    };
    let after = RunOptions {
        timing: ProjectionTiming::AfterTestDraw,
        ..before
    };
    run_pair_counts(model, params, [before, after], trials, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockGroup {
    pub c: u16,
    pub d: u16,
    pub rounds: u64,
    pub mean_spectrum: [f64; 4],
    /// Largest ∞-norm distance of a round's spectrum from the group mean.
    pub max_deviation: f64,
    /// Σ over rounds and entries of (λ − λ̄)²/λ̄.
    pub chi_square: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeptStateReport {
    pub kept_rounds: u64,
    pub max_off_diagonal: f64,
    pub all_bell_diagonal: bool,
    pub groups: Vec<BlockGroup>,
    /// Every group has identical spectra across rounds (deviation below 1e-10).
    pub round_independent: bool,
}

/// Checks that every kept pair is Bell-diagonal and groups spectra by block indices.
pub fn check_kept_state_structure(transcript: &Transcript) -> Result<KeptStateReport> {
    if transcript.mode != Mode::Modified {
        return Err(Error::InvalidParameters(
            "kept-state structure is only defined for modified-mode transcripts".into(),
        ));
    }
    let mut max_off = 0.0_f64;
    let mut grouped: std::collections::BTreeMap<(u16, u16), Vec<[f64; 4]>> = Default::default();
    let mut kept = 0u64;
    for r in transcript.rounds.iter().filter(|r| r.t == 0) {
        let Some(state) = &r.kept_state else {
            return Err(Error::Transcript(
                "non-test round without a kept state; run with record_kept_states".into(),
            ));
        };
        kept += 1;
        max_off = max_off.max(bell_off_diagonal(state));
        let spectrum = bell_spectrum(state)
            .map(|s| s.to_array())
            .unwrap_or_else(|_| crate::quantum::bell_diagonal_entries(state));
        let key = (r.c.unwrap_or(0), r.d.unwrap_or(0));
        grouped.entry(key).or_default().push(spectrum);
    }
    let groups: Vec<BlockGroup> = grouped
        .into_iter()
        .map(|((c, d), spectra)| {
            let n = spectra.len() as f64;
            let mut mean = [0.0; 4];
            for s in &spectra {
                for k in 0..4 {
                    mean[k] += s[k] / n;
                }
            }
            let mut max_dev = 0.0_f64;
            let mut chi = 0.0;
            for s in &spectra {
                for k in 0..4 {
                    let dev = s[k] - mean[k];
                    max_dev = max_dev.max(dev.abs());
                    if mean[k] > 1e-12 {
                        chi += dev * dev / mean[k];
                    }
                }
            }
            BlockGroup {
                c,
                d,
                rounds: spectra.len() as u64,
                mean_spectrum: mean,
                max_deviation: max_dev,
                chi_square: chi,
            }
        })
        .collect();
    Ok(KeptStateReport {
        kept_rounds: kept,
        max_off_diagonal: max_off,
        all_bell_diagonal: max_off <= 1e-10,
        round_independent: groups.iter().all(|g| g.max_deviation < 1e-10),
        groups,
    })
}

pub const TRANSCRIPT_COLUMNS: &str = "i,t,x,y,a,b,w,c,d";

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Line-oriented transcript: `# key=value` header lines, the column row, one row per round.
pub fn format_transcript(t: &Transcript) -> String {
    let mut out = String::new();
    let p = &t.params;
    let _ = writeln!(out, "# format=diec-transcript-v1");
    let _ = writeln!(out, "# model={}", t.model);
    let _ = writeln!(out, "# mode={}", t.mode.name());
    let _ = writeln!(out, "# seed={}", t.seed);
    let _ = writeln!(out, "# n={}", p.n);
    let _ = writeln!(out, "# gamma={}", p.gamma);
    let _ = writeln!(out, "# omega_exp={}", p.omega_exp);
    let _ = writeln!(out, "# delta_est={}", p.delta_est);
    let _ = writeln!(out, "# win_count={}", t.win_count);
    let _ = writeln!(out, "# aborted={}", t.aborted);
    let _ = writeln!(out, "{TRANSCRIPT_COLUMNS}");
    for (i, r) in t.rounds.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{}",
            r.t,
            opt(r.x),
            opt(r.y),
            opt(r.a),
            opt(r.b),
            opt(r.w),
            opt(r.c),
            opt(r.d)
        );
    }
    out
}

fn parse_field<T: FromStr>(s: &str, line: usize) -> Result<Option<T>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::Transcript(format!("line {line}: bad field '{s}'")))
}

/// Parses [`format_transcript`] output; kept states are not part of the format.
pub fn parse_transcript(text: &str) -> Result<Transcript> {
    let mut header = std::collections::HashMap::new();
    let mut rounds = Vec::new();
    let mut seen_columns = false;
    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                header.insert(k.to_string(), v.to_string());
            }
            continue;
        }
        if !seen_columns {
            if line != TRANSCRIPT_COLUMNS {
                return Err(Error::Transcript(format!(
                    "line {line_no}: expected column header '{TRANSCRIPT_COLUMNS}'"
                )));
            }
            seen_columns = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Transcript(format!(
                "line {line_no}: expected 9 fields, found {}",
                fields.len()
            )));
        }
        let i: usize = parse_field(fields[0], line_no)?
            .ok_or_else(|| Error::Transcript(format!("line {line_no}: missing round index")))?;
        if i != rounds.len() {
            return Err(Error::Transcript(format!(
                "line {line_no}: round index {i} out of order"
            )));
        }
        let t: u8 = parse_field(fields[1], line_no)?
            .ok_or_else(|| Error::Transcript(format!("line {line_no}: missing test flag")))?;
        rounds.push(RoundRecord::from_classical(ClassicalRound {
            t,
            x: parse_field(fields[2], line_no)?,
            y: parse_field(fields[3], line_no)?,
            a: parse_field(fields[4], line_no)?,
            b: parse_field(fields[5], line_no)?,
            w: parse_field(fields[6], line_no)?,
            c: parse_field(fields[7], line_no)?,
            d: parse_field(fields[8], line_no)?,
        }));
    }
    let get = |k: &str| -> Result<&String> {
        header
            .get(k)
            .ok_or_else(|| Error::Transcript(format!("missing header '{k}'")))
    };
    let num = |k: &str| -> Result<f64> {
        get(k)?
            .parse()
            .map_err(|_| Error::Transcript(format!("bad header value for '{k}'")))
    };
    let int = |k: &str| -> Result<u64> {
        get(k)?
            .parse()
            .map_err(|_| Error::Transcript(format!("bad header value for '{k}'")))
    };
    let params = ProtocolParams::relaxed(
        int("n")?,
        num("gamma")?,
        num("omega_exp")?,
        num("delta_est")?,
    )?;
    if rounds.len() as u64 != params.n {
        return Err(Error::Transcript(format!(
            "header says n = {} but {} rounds were listed",
            params.n,
            rounds.len()
        )));
    }
    Ok(Transcript {
        model: get("model")?.clone(),
        mode: get("mode")?.parse()?,
        seed: int("seed")?,
        params,
        rounds,
        win_count: int("win_count")?,
        aborted: get("aborted")?
            .parse()
            .map_err(|_| Error::Transcript("bad header value for 'aborted'".into()))?,
    })
}
