//! Synthetic survival data with known log-hazards.
//!
//! Event times are drawn by inverting a trapezoidal cumulative-hazard table on
//! `(0, 10]`, censoring is exponential with administrative cut-off at `t = 3`,
//! and ground-truth survival curves are integrated on a 200-point grid.

use std::f64::consts::PI;
use std::io::Write;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::SurvivalDataset;

pub const COVARIATES: usize = 5;
pub const ADMIN_HORIZON: f64 = 3.0;
pub const SUPPORT_END: f64 = 10.0;
pub const TABLE_POINTS: usize = 2000;
pub const TRUTH_POINTS: usize = 200;
pub const TARGET_CENSOR_RATE: f64 = 0.30;
pub const CENSOR_TOLERANCE: f64 = 0.01;
pub const TEST_SET_SIZE: usize = 2000;
pub const DEFAULT_PROBE: usize = 50_000;

const STREAM_COVARIATES: u64 = 0;
const STREAM_EVENT: u64 = 1;
const STREAM_CENSOR: u64 = 2;
const LAMBDA_C_RANGE: (f64, f64) = (1e-6, 1e3);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Dgp {
    One,
    Two,
    Three,
    Four,
}

impl TryFrom<u8> for Dgp {
    type Error = Error;

    fn try_from(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Dgp::One),
            2 => Ok(Dgp::Two),
            3 => Ok(Dgp::Three),
            4 => Ok(Dgp::Four),
            _ => Err(Error::Config(format!("unknown DGP id {id}; expected 1-4"))),
        }
    }
}

impl From<Dgp> for u8 {
    fn from(d: Dgp) -> u8 {
        d.id()
    }
}

impl Dgp {
    pub const ALL: [Dgp; 4] = [Dgp::One, Dgp::Two, Dgp::Three, Dgp::Four];

    pub fn id(self) -> u8 {
        match self {
            Dgp::One => 1,
            Dgp::Two => 2,
            Dgp::Three => 3,
            Dgp::Four => 4,
        }
    }

    /// Smoothness exponent used for the adaptive spline grid.
    pub fn smoothness(self) -> u32 {
        match self {
            Dgp::Two => 1,
            _ => 4,
        }
    }

    /// Network widths for this DGP: additive ones get a single layer.
    pub fn widths(self) -> Vec<usize> {
        match self {
            Dgp::One | Dgp::Two => vec![COVARIATES + 1, 1],
            Dgp::Three | Dgp::Four => vec![COVARIATES + 1, 3, 1],
        }
    }

    /// True log-hazard at raw time `t`. Only `x[0]` and `x[1]` enter.
    pub fn log_hazard(self, x: &[f64], t: f64) -> f64 {
        let (x1, x2) = (x[0], x[1]);
        match self {
            Dgp::One => (2.0 * PI * x1).sin() + 0.5 * (2.0 * PI * x2).cos() - 0.3 * (PI * t).sin() + 0.2,
            Dgp::Two => (2.0 * x1 - 1.0).abs() + 0.5 * (2.0 * PI * x2).cos() - 0.3 * (PI * t).sin() + 0.2,
            Dgp::Three => (PI * (x1 + 0.5 * x2)).sin() - 0.3 * t + 0.2,
            Dgp::Four => x1 * x1 * t + 0.3 * (PI * x2).sin() - 0.4,
        }
    }
}

/// `ceil(n^(1 / (2r + 1)))` in exact integer arithmetic.
pub fn adaptive_grid_size(n: usize, r: u32) -> usize {
    let e = 2 * r + 1;
    let mut j = (n as f64).powf(1.0 / e as f64).round().max(1.0) as usize;
    while j > 1 && (j - 1).checked_pow(e).is_some_and(|v| v >= n) {
        j -= 1;
    }
    while j.checked_pow(e).is_some_and(|v| v < n) {
        j += 1;
    }
    j
}

/// Piecewise-trapezoid cumulative hazard on a uniform table over
/// `(0, SUPPORT_END]`, built lazily up to the largest time requested.
pub struct CumulativeHazard<F: Fn(f64) -> f64> {
    log_hazard: F,
    step: f64,
    hazard: Vec<f64>,
    cum: Vec<f64>,
}

impl<F: Fn(f64) -> f64> CumulativeHazard<F> {
    pub fn new(log_hazard: F) -> Self {
        let h0 = log_hazard(0.0).exp();
        Self {
            log_hazard,
            step: SUPPORT_END / TABLE_POINTS as f64,
            hazard: vec![h0],
            cum: vec![0.0],
        }
    }

    fn node(&self, j: usize) -> f64 {
        j as f64 * self.step
    }

    fn extend_to(&mut self, j: usize) {
        while self.cum.len() <= j {
            let k = self.cum.len();
            let h = (self.log_hazard)(self.node(k)).exp();
            let c = self.cum[k - 1] + 0.5 * self.step * (self.hazard[k - 1] + h);
            self.hazard.push(h);
            self.cum.push(c);
        }
    }

    /// Cumulative hazard at `t` in `[0, SUPPORT_END]`: table value at the
    /// node below plus the trapezoid to `t`.
    pub fn eval(&mut self, t: f64) -> f64 {
        let t = t.clamp(0.0, SUPPORT_END);
        let j = ((t / self.step).floor() as usize).min(TABLE_POINTS - 1);
        self.extend_to(j + 1);
        let t0 = self.node(j);
        if t == t0 {
            return self.cum[j];
        }
        let h = (self.log_hazard)(t).exp();
        self.cum[j] + 0.5 * (t - t0) * (self.hazard[j] + h)
    }

    /// Solves `Lambda(T) = target`. The flag is set when the support end is
    /// reached first.
    pub fn invert(&mut self, target: f64) -> (f64, bool) {
        if target <= 0.0 {
            return (0.0, false);
        }
        let mut j = 0;
        loop {
            if j == TABLE_POINTS {
                return (SUPPORT_END, true);
            }
            self.extend_to(j + 1);
            if self.cum[j + 1] >= target {
                break;
            }
            j += 1;
        }
        let (mut lo, mut hi) = (self.node(j), self.node(j + 1));
        for _ in 0..200 {
            if hi - lo <= 1e-13 * hi.max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.eval(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi), false)
    }
}

/// Event time for covariates `x` and uniform draw `u`, plus the support flag.
pub fn sample_event_time(dgp: Dgp, x: &[f64], u: f64) -> (f64, bool) {
    CumulativeHazard::new(|t| dgp.log_hazard(x, t)).invert(-u.ln())
}

/// Ground-truth survival on `times` (ascending, raw units) by trapezoidal
/// integration from the origin through the listed times.
pub fn true_survival(dgp: Dgp, x: &[f64], times: &[f64]) -> Vec<f64> {
    let mut prev_t = 0.0;
    let mut prev_h = dgp.log_hazard(x, 0.0).exp();
    let mut cum = 0.0;
    times
        .iter()
        .map(|&t| {
            let h = dgp.log_hazard(x, t).exp();
            cum += 0.5 * (t - prev_t) * (prev_h + h);
            prev_t = t;
            prev_h = h;
            (-cum).exp()
        })
        .collect()
}

pub fn truth_grid() -> Vec<f64> {
    (1..=TRUTH_POINTS)
        .map(|j| ADMIN_HORIZON * j as f64 / TRUTH_POINTS as f64)
        .collect()
}

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

struct Probe {
    event: Vec<f64>,
    /// Unit-rate exponential draws; `C = e / lambda_c`.
    unit_censor: Vec<f64>,
}

impl Probe {
    fn draw(dgp: Dgp, n: usize, seed: u64) -> Self {
        let mut xr = stream(seed, STREAM_COVARIATES);
        let mut ur = stream(seed, STREAM_EVENT);
        let mut cr = stream(seed, STREAM_CENSOR);
        let mut x = [0.0; COVARIATES];
        let mut event = Vec::with_capacity(n);
        let mut unit_censor = Vec::with_capacity(n);
        for _ in 0..n {
            x.iter_mut().for_each(|v| *v = xr.random::<f64>());
            let u = open_unit(&mut ur);
            event.push(sample_event_time(dgp, &x, u).0);
            unit_censor.push(Exp1.sample(&mut cr));
        }
        Self { event, unit_censor }
    }

    fn censor_rate(&self, lambda_c: f64) -> f64 {
        let censored = self
            .event
            .iter()
            .zip(&self.unit_censor)
            .filter(|(&t, &e)| (e / lambda_c).min(ADMIN_HORIZON) < t)
            .count();
        censored as f64 / self.event.len() as f64
    }
}

fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Censoring rate of `min(C, 3) < T` on a fresh sample of `n` subjects.
pub fn censor_rate(dgp: Dgp, lambda_c: f64, n: usize, seed: u64) -> f64 {
    Probe::draw(dgp, n, seed).censor_rate(lambda_c)
}

/// Bisection (on `log lambda_c`) for the exponential censoring rate giving a
/// 30% overall censoring fraction on `n_probe` common random draws.
pub fn calibrate_censoring(dgp: Dgp, n_probe: usize, seed: u64) -> Result<f64> {
    if n_probe < 10_000 {
        return Err(Error::Config(format!("n_probe {n_probe} below 10000")));
    }
    let probe = Probe::draw(dgp, n_probe, seed);
    let (mut lo, mut hi) = LAMBDA_C_RANGE;
    let (r_lo, r_hi) = (probe.censor_rate(lo), probe.censor_rate(hi));
    if r_lo > TARGET_CENSOR_RATE + CENSOR_TOLERANCE || r_hi < TARGET_CENSOR_RATE - CENSOR_TOLERANCE {
        return Err(Error::Calibration {
            target: TARGET_CENSOR_RATE,
            low_rate: r_lo,
            high_rate: r_hi,
        });
    }
    for _ in 0..100 {
        let mid = (lo.ln() * 0.5 + hi.ln() * 0.5).exp();
        if probe.censor_rate(mid) < TARGET_CENSOR_RATE {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-10 {
            break;
        }
    }
    let rate = probe.censor_rate(hi);
    if (rate - TARGET_CENSOR_RATE).abs() > CENSOR_TOLERANCE {
        return Err(Error::Calibration {
            target: TARGET_CENSOR_RATE,
            low_rate: probe.censor_rate(lo),
            high_rate: rate,
        });
    }
    Ok(hi)
}

/// A simulated sample on the raw time scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedData {
    pub dgp: Dgp,
    pub x: Array2<f64>,
    pub time: Vec<f64>,
    pub event: Vec<bool>,
    /// Subjects whose event time hit the end of the support.
    pub support_hits: usize,
}

impl SimulatedData {
    pub fn n(&self) -> usize {
        self.time.len()
    }

    pub fn censor_rate(&self) -> f64 {
        self.event.iter().filter(|&&e| !e).count() as f64 / self.n() as f64
    }

    /// Observed times divided by the administrative horizon.
    pub fn normalised(&self) -> Result<SurvivalDataset> {
        SurvivalDataset::new(
            self.x.clone(),
            self.time.iter().map(|t| t / ADMIN_HORIZON).collect(),
            self.event.clone(),
        )
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.x.ncols()).map(|c| format!("x{c}")).collect();
        header.push("time".into());
        header.push("event".into());
        w.write_record(&header)?;
        for (i, row) in self.x.outer_iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(self.time[i].to_string());
            rec.push(u8::from(self.event[i]).to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws `n` subjects with censoring rate `lambda_c`.
pub fn generate(dgp: Dgp, n: usize, seed: u64, lambda_c: f64) -> Result<SimulatedData> {
    if n < 16 {
        return Err(Error::Config(format!("n = {n} below 16")));
    }
    let mut xr = stream(seed, STREAM_COVARIATES);
    let mut ur = stream(seed, STREAM_EVENT);
    let mut cr = stream(seed, STREAM_CENSOR);
    let x = Array2::from_shape_fn((n, COVARIATES), |_| xr.random::<f64>());
    let mut time = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    let mut support_hits = 0;
    for row in x.outer_iter() {
        let u = open_unit(&mut ur);
        let (t, hit) = sample_event_time(dgp, row.as_slice().expect("row-major"), u);
        support_hits += usize::from(hit);
        let e: f64 = Exp1.sample(&mut cr);
        let c = (e / lambda_c).min(ADMIN_HORIZON);
        if t <= c {
            time.push(t);
            event.push(true);
        } else {
            time.push(c);
            event.push(false);
        }
    }
    Ok(SimulatedData {
        dgp,
        x,
        time,
        event,
        support_hits,
    })
}

/// True survival of each subject on the 200-point grid over `(0, 3]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub times: Vec<f64>,
    pub survival: Array2<f64>,
}

impl GroundTruth {
    pub fn compute(dgp: Dgp, x: &Array2<f64>) -> Self {
        let times = truth_grid();
        let mut survival = Array2::zeros((x.nrows(), times.len()));
        for (row, mut out) in x.outer_iter().zip(survival.outer_iter_mut()) {
            let s = true_survival(dgp, row.as_slice().expect("row-major"), &times);
            out.iter_mut().zip(s).for_each(|(o, v)| *o = v);
        }
        Self { times, survival }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.times.iter().map(|t| t.to_string()))?;
        for row in self.survival.outer_iter() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Calibrated censoring for one DGP plus its shared test set.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub dgp: Dgp,
    pub lambda_c: f64,
    pub test: SimulatedData,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationManifest {
    pub dgp: Dgp,
    pub n: usize,
    pub seed: u64,
    pub lambda_c: f64,
    pub calibration_seed: u64,
    pub achieved_censor_rate: f64,
    pub support_hits: usize,
}

impl Scenario {
    pub fn calibration_seed(dgp: Dgp) -> u64 {
        0x5EED_0000 + u64::from(dgp.id())
    }

    pub fn test_seed(dgp: Dgp) -> u64 {
        0x7E57_0000 + u64::from(dgp.id())
    }

    pub fn new(dgp: Dgp) -> Result<Self> {
        let lambda_c = calibrate_censoring(dgp, DEFAULT_PROBE, Self::calibration_seed(dgp))?;
        let test = generate(dgp, TEST_SET_SIZE, Self::test_seed(dgp), lambda_c)?;
        let truth = GroundTruth::compute(dgp, &test.x);
        Ok(Self {
            dgp,
            lambda_c,
            test,
            truth,
        })
    }

    pub fn training_set(&self, n: usize, seed: u64) -> Result<SimulatedData> {
        generate(self.dgp, n, seed, self.lambda_c)
    }

    pub fn manifest(&self, data: &SimulatedData, seed: u64) -> SimulationManifest {
        SimulationManifest {
            dgp: self.dgp,
            n: data.n(),
            seed,
            lambda_c: self.lambda_c,
            calibration_seed: Self::calibration_seed(self.dgp),
            achieved_censor_rate: data.censor_rate(),
            support_hits: data.support_hits,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_spot_values() {
        let x = [0.25, 0.25, 0.9, 0.9, 0.9];
        assert!((Dgp::One.log_hazard(&x, 0.0) - 1.2).abs() < 1e-15);
        let rest = |x2: f64, t: f64| 0.5 * (2.0 * PI * x2).cos() - 0.3 * (PI * t).sin() + 0.2;
        assert_eq!(Dgp::Two.log_hazard(&[0.5, 0.3, 0.0, 0.0, 0.0], 1.7), rest(0.3, 1.7));
        for t in [0.1, 1.0, 2.7] {
            let x = [0.0, 0.3, 0.1, 0.2, 0.3];
            let expected = 0.3 * (PI * 0.3).sin() - 0.4;
            assert!((Dgp::Four.log_hazard(&x, t) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn noise_columns_never_enter() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dgp in Dgp::ALL {
            for _ in 0..50 {
                let x: Vec<f64> = (0..5).map(|_| rng.random()).collect();
                let mut y = x.clone();
                y[2..].rotate_left(1);
                y[4] = rng.random();
                let t = rng.random_range(0.0..10.0);
                assert_eq!(dgp.log_hazard(&x, t), dgp.log_hazard(&y, t));
            }
        }
    }

    #[test]
    fn grid_size_is_exact_at_powers() {
        assert_eq!(adaptive_grid_size(512, 4), 2);
        assert_eq!(adaptive_grid_size(513, 4), 3);
        assert_eq!(adaptive_grid_size(8192, 4), 3);
        assert_eq!(adaptive_grid_size(512, 1), 8);
        assert_eq!(adaptive_grid_size(8192, 1), 21);
        assert_eq!(adaptive_grid_size(1, 4), 1);
        for n in 1..5000usize {
            let j = adaptive_grid_size(n, 1);
            assert!(j.pow(3) >= n && (j - 1).pow(3) < n);
        }
    }

    #[test]
    fn unit_hazard_inverts_to_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let u: f64 = rng.random_range(1e-4..1.0);
            let (t, hit) = CumulativeHazard::new(|_| 0.0).invert(-u.ln());
            assert!(!hit);
            assert!((t + u.ln()).abs() < 1e-8);
        }
        let (t, hit) = CumulativeHazard::new(|_| 0.0).invert(11.0);
        assert!(hit);
        assert_eq!(t, SUPPORT_END);
    }

    #[test]
    fn inversion_solves_the_table_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dgp in Dgp::ALL {
            for _ in 0..20 {
                let x: Vec<f64> = (0..5).map(|_| rng.random()).collect();
                let u: f64 = rng.random_range(1e-3..1.0);
                let (t, hit) = sample_event_time(dgp, &x, u);
                if hit {
                    continue;
                }
                let mut table = CumulativeHazard::new(|s| dgp.log_hazard(&x, s));
                assert!((table.eval(t) + u.ln()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn inversion_is_monotone_in_u() {
        let x = [0.3, 0.8, 0.0, 0.0, 0.0];
        let mut prev = 0.0;
        for k in (1..200).rev() {
            let (t, _) = sample_event_time(Dgp::One, &x, k as f64 / 200.0);
            assert!(t > prev);
            prev = t;
        }
        assert!(sample_event_time(Dgp::One, &x, 1.0 - 1e-12).0 < 1e-9);
    }

    #[test]
    fn event_distribution_matches_closed_form_cdf() {
        // DGP-3 has a closed-form cumulative hazard.
        let x = [0.4, 0.6, 0.5, 0.5, 0.5];
        let a = ((PI * (x[0] + 0.5 * x[1])).sin() + 0.2).exp();
        let cdf = |t: f64| 1.0 - (-a * (1.0 - (-0.3 * t).exp()) / 0.3).exp();
        let mut rng = stream(42, STREAM_EVENT);
        let n = 100_000;
        let mut draws: Vec<f64> = (0..n)
            .map(|_| sample_event_time(Dgp::Three, &x, open_unit(&mut rng)).0)
            .collect();
        draws.sort_by(f64::total_cmp);
        let mut ks: f64 = 0.0;
        for (i, &t) in draws.iter().enumerate() {
            let f = cdf(t);
            ks = ks.max((f - i as f64 / n as f64).abs()).max(((i + 1) as f64 / n as f64 - f).abs());
        }
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn truth_matches_closed_form_and_starts_at_one() {
        let x = [0.1, 0.9, 0.0, 0.0, 0.0];
        let a = ((PI * (x[0] + 0.5 * x[1])).sin() + 0.2).exp();
        let times = truth_grid();
        let s = true_survival(Dgp::Three, &x, &times);
        for (t, v) in times.iter().zip(&s) {
            let exact = (-a * (1.0 - (-0.3 * t).exp()) / 0.3).exp();
            assert!((v - exact).abs() < 1e-5);
        }
        assert!(s.windows(2).all(|w| w[1] < w[0]));
        for dgp in Dgp::ALL {
            assert!((true_survival(dgp, &x, &[1e-4])[0] - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(Dgp::Two, 100, 9, 0.1).unwrap();
        let b = generate(Dgp::Two, 100, 9, 0.1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate(Dgp::Two, 100, 10, 0.1).unwrap());
        assert!(a.time.iter().all(|&t| t > 0.0 && t <= ADMIN_HORIZON));
        let ds = a.normalised().unwrap();
        assert!(ds.y().iter().all(|&y| (0.0..=1.0).contains(&y)));
    }

    #[test]
    fn censoring_calibration_hits_target() {
        let lc = calibrate_censoring(Dgp::One, 20_000, 5).unwrap();
        let fresh = censor_rate(Dgp::One, lc, 20_000, 77);
        assert!((0.27..=0.33).contains(&fresh), "{fresh}");
        assert!(censor_rate(Dgp::One, 2.0 * lc, 20_000, 77) > fresh);
        let admin_only = censor_rate(Dgp::One, 1e-12, 20_000, 77);
        let probe = Probe::draw(Dgp::One, 20_000, 77);
        let beyond = probe.event.iter().filter(|&&t| t > ADMIN_HORIZON).count() as f64 / 20_000.0;
        assert_eq!(admin_only, beyond);
        assert!(admin_only < TARGET_CENSOR_RATE);
        assert!(calibrate_censoring(Dgp::One, 100, 5).is_err());
    }

    #[test]
    fn csv_has_expected_columns() {
        let d = generate(Dgp::Four, 20, 1, 0.2).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x1,x2,x3,x4,x5,time,event\n"));
        assert_eq!(text.lines().count(), 21);
    }
}
