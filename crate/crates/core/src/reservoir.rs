//! Time-multiplexed reservoir states and the linear readout.
//!
//! The continuous bound-fraction trace is sampled at `M` offsets inside
//! every symbol ("virtual nodes"); the last `L` such vectors plus a bias
//! entry form one readout row. The readout is fitted by ridge-regularized
//! least squares, which reduces to the Moore-Penrose pseudoinverse at
//! `lambda = 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Num;
use crate::params::ChannelParams;
use crate::receptor::BoundFractionTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReservoirConfig {
    pub virtual_nodes: usize,
    pub memory_window: usize,
    pub washout: usize,
    pub ridge: f64,
    /// Causal moving-average window in trace samples; 0 disables it.
    pub filter_window: usize,
    pub train_fraction: f64,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self {
            virtual_nodes: 20,
            memory_window: 5,
            washout: 50,
            ridge: 1e-6,
            filter_window: 0,
            train_fraction: 0.7,
        }
    }
}

impl ReservoirConfig {
    pub fn validate(&self) -> Result<()> {
        if self.virtual_nodes < 1 {
            return Err(Error::validation("virtual_nodes must be at least 1"));
        }
        if self.memory_window < 1 {
            return Err(Error::validation("memory_window must be at least 1"));
        }
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(Error::validation(format!(
                "ridge must be finite and >= 0, got {}",
                self.ridge
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::validation(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }

    /// Readout row width `M L + 1`.
    pub fn feature_len(&self) -> usize {
        self.virtual_nodes * self.memory_window + 1
    }
}

/// Causal moving average over `window` samples.
///
/// The first `window - 1` outputs average only the samples seen so far.
pub fn moving_average_filter(
    trace: &BoundFractionTrace,
    window: usize,
) -> Result<BoundFractionTrace> {
    if window < 1 {
        return Err(Error::validation("moving-average window must be >= 1"));
    }
    let samples = moving_average(&trace.samples, window)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    Ok(BoundFractionTrace {
        dt: trace.dt,
        t0: trace.t0,
        samples,
    })
}

pub(crate) fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    if window == 1 {
        return x.to_vec();
    }
    // Neumaier-compensated running sum.
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let mut push = |v: f64| {
            let t = sum + v;
            if sum.abs() >= v.abs() {
                comp += (sum - t) + v;
            } else {
                comp += (v - t) + sum;
            }
            sum = t;
        };
        push(x[i]);
        if i >= window {
            push(-x[i - window]);
        }
        let count = (i + 1).min(window) as f64;
        out.push((sum + comp) / count);
    }
    out
}

/// Virtual-node states, one row of `M` samples per symbol.
///
/// Symbol `n` is sampled at `n T + (j + 1) T / M`, `j = 0..M`, by
/// nearest-sample lookup on the trace grid.
pub fn build_states(
    trace: &BoundFractionTrace,
    params: &ChannelParams,
    config: &ReservoirConfig,
    num_symbols: usize,
) -> Result<DMatrix<f64>> {
    config.validate()?;
    let m = config.virtual_nodes;
    let period = params.symbol_duration;
    let spacing = period / m as f64;
    if spacing < trace.dt * (1.0 - 1e-9) {
        return Err(Error::validation(format!(
            "{m} virtual nodes need spacing {spacing} s but the trace grid is {} s",
            trace.dt
        )));
    }
    let needed = num_symbols as f64 * period;
    if trace.end_time() < needed - 0.5 * trace.dt {
        return Err(Error::validation(format!(
            "trace ends at {} s but {num_symbols} symbols need {needed} s",
            trace.end_time()
        )));
    }
    let mut states = DMatrix::zeros(num_symbols, m);
    for n in 0..num_symbols {
        for j in 0..m {
            let t = n as f64 * period + (j + 1) as f64 * spacing;
            states[(n, j)] = trace
                .sample_near(t)
                .ok_or_else(|| Error::validation(format!("trace has no sample near t = {t}")))?;
        }
    }
    Ok(states)
}

/// Readout design matrix and aligned targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirDataset {
    pub states: DMatrix<f64>,
    pub targets: DVector<f64>,
    /// Symbol index `n` of each row.
    pub symbols: Vec<usize>,
}

impl ReservoirDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Contiguous split: the first `floor(fraction * rows)` rows train.
    pub fn split(&self, fraction: f64) -> Result<(ReservoirDataset, ReservoirDataset)> {
        let rows = self.len();
        let n_train = (fraction * rows as f64).floor() as usize;
        if n_train == 0 || n_train >= rows {
            return Err(Error::validation(format!(
                "split fraction {fraction} of {rows} rows leaves an empty side"
            )));
        }
        let take = |start: usize, len: usize| ReservoirDataset {
            states: self.states.rows(start, len).into_owned(),
            targets: self.targets.rows(start, len).into_owned(),
            symbols: self.symbols[start..start + len].to_vec(),
        };
        Ok((take(0, n_train), take(n_train, rows - n_train)))
    }

    /// CSV with header `n,x0,..,x{k-1},bias,y`.
    pub fn to_csv(&self) -> String {
        let cols = self.states.ncols();
        let mut out = String::from("n");
        for j in 0..cols - 1 {
            out.push_str(&format!(",x{j}"));
        }
        out.push_str(",bias,y\n");
        for r in 0..self.len() {
            out.push_str(&self.symbols[r].to_string());
            for j in 0..cols {
                out.push_str(&format!(",{}", Num(self.states[(r, j)])));
            }
            out.push_str(&format!(",{}\n", Num(self.targets[r])));
        }
        out
    }
}

/// Window `L` consecutive state vectors, append the bias, drop the washout.
pub fn assemble_dataset(
    states: &DMatrix<f64>,
    targets: &[f64],
    config: &ReservoirConfig,
) -> Result<ReservoirDataset> {
    config.validate()?;
    let symbols = states.nrows();
    if targets.len() != symbols {
        return Err(Error::validation(format!(
            "{symbols} state rows but {} targets",
            targets.len()
        )));
    }
    let l = config.memory_window;
    let first = config.washout + l - 1;
    if symbols < config.washout + l {
        return Err(Error::validation(format!(
            "{symbols} symbols cannot cover washout {} plus a window of {l}",
            config.washout
        )));
    }
    let m = states.ncols();
    let rows = symbols - first;
    let cols = m * l + 1;
    let mut x = DMatrix::zeros(rows, cols);
    for (r, n) in (first..symbols).enumerate() {
        for (w, s) in (n + 1 - l..=n).enumerate() {
            for j in 0..m {
                x[(r, w * m + j)] = states[(s, j)];
            }
        }
        x[(r, cols - 1)] = 1.0;
    }
    Ok(ReservoirDataset {
        states: x,
        targets: DVector::from_iterator(rows, targets[first..].iter().copied()),
        symbols: (first..symbols).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutWeights {
    pub weights: Vec<f64>,
    /// Set when the design was rank deficient and the minimum-norm
    /// solution was used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl ReadoutWeights {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,weight\n");
        for (i, w) in self.weights.iter().enumerate() {
            out.push_str(&format!("{i},{}\n", Num(*w)));
        }
        out
    }
}

/// Solve `min_w |X w - y|^2 + lambda |w|^2`.
///
/// `lambda > 0` goes through a Cholesky factorization of the normal
/// equations. `lambda = 0` uses the SVD pseudoinverse of `X` directly, which
/// is the minimum-norm solution when `X` is rank deficient.
pub fn train_readout(dataset: &ReservoirDataset, ridge: f64) -> Result<ReadoutWeights> {
    if dataset.is_empty() {
        return Err(Error::validation("cannot train on an empty dataset"));
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::validation(format!(
            "ridge must be >= 0, got {ridge}"
        )));
    }
    let x = &dataset.states;
    let y = &dataset.targets;
    let cols = x.ncols();
    let (w, diagnostic) = if ridge > 0.0 {
        let mut gram = x.transpose() * x;
        for i in 0..cols {
            gram[(i, i)] += ridge;
        }
        let rhs = x.transpose() * y;
        match gram.clone().cholesky() {
            Some(chol) => (chol.solve(&rhs), None),
            None => {
                let w = pseudo_solve(&gram, &rhs)?;
                (
                    w,
                    Some("normal equations not positive definite; used SVD".into()),
                )
            }
        }
    } else {
        let svd = x.clone().svd(true, true);
        let tol = f64::EPSILON * x.nrows().max(cols) as f64 * svd.singular_values.max();
        let rank = svd.rank(tol);
        let w = svd
            .solve(y, tol)
            .map_err(|e| Error::Numerical(format!("pseudoinverse solve failed: {e}")))?;
        let diag = (rank < cols).then(|| {
            format!("design matrix rank {rank} < {cols} columns; minimum-norm solution used")
        });
        (w, diag)
    };
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("readout weights are not finite".into()));
    }
    Ok(ReadoutWeights {
        weights: w.iter().copied().collect(),
        diagnostic,
    })
}

fn pseudo_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let tol = f64::EPSILON * a.nrows() as f64 * svd.singular_values.max();
    svd.solve(b, tol)
        .map_err(|e| Error::Numerical(format!("pseudoinverse solve failed: {e}")))
}

/// `y_hat = w . x`.
pub fn predict(weights: &ReadoutWeights, row: &[f64]) -> Result<f64> {
    if row.len() != weights.weights.len() {
        return Err(Error::validation(format!(
            "state row has {} entries but the readout expects {}",
            row.len(),
            weights.weights.len()
        )));
    }
    Ok(weights.weights.iter().zip(row).map(|(w, x)| w * x).sum())
}

/// Predictions for every row of a dataset.
pub fn predict_all(weights: &ReadoutWeights, dataset: &ReservoirDataset) -> Result<Vec<f64>> {
    if dataset.states.ncols() != weights.weights.len() {
        return Err(Error::validation(format!(
            "dataset has {} columns but the readout expects {}",
            dataset.states.ncols(),
            weights.weights.len()
        )));
    }
    let w = DVector::from_column_slice(&weights.weights);
    Ok((&dataset.states * w).iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::nrmse;

    fn trace(samples: Vec<f64>, dt: f64) -> BoundFractionTrace {
        BoundFractionTrace {
            dt,
            t0: 0.0,
            samples,
        }
    }

    #[test]
    fn filter_preserves_constants() {
        let tr = trace(vec![0.4; 500], 0.01);
        for w in [1, 2, 7, 100, 2000] {
            let f = moving_average_filter(&tr, w).unwrap();
            assert_eq!(f.len(), 500);
            for v in &f.samples {
                assert!((v - 0.4).abs() < 1e-15, "{v}");
            }
        }
    }

    #[test]
    fn filter_two_sample_mean() {
        let tr = trace((0..8).map(|i| (i % 2) as f64).collect(), 0.1);
        let f = moving_average_filter(&tr, 2).unwrap();
        assert_eq!(f.samples, vec![0.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn filter_window_one_is_identity() {
        let tr = trace(vec![0.1, 0.7, 0.3, 0.9], 0.1);
        assert_eq!(moving_average_filter(&tr, 1).unwrap(), tr);
        assert!(moving_average_filter(&tr, 0).is_err());
    }

    #[test]
    fn filter_expanding_start() {
        let f = moving_average(&[1.0, 0.0, 0.5, 0.5], 3);
        assert_eq!(f[0], 1.0);
        assert_eq!(f[1], 0.5);
        assert!((f[2] - 0.5).abs() < 1e-15);
        assert!((f[3] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constant_trace_gives_constant_states() {
        let p = ChannelParams::FORECASTING;
        let cfg = ReservoirConfig::default();
        let n = 4;
        let dt = p.symbol_duration / 200.0;
        let tr = trace(vec![0.5; 200 * n + 1], dt);
        let s = build_states(&tr, &p, &cfg, n).unwrap();
        assert_eq!(s.shape(), (n, 20));
        assert!(s.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn single_node_is_symbol_end() {
        let p = ChannelParams {
            symbol_duration: 1.0,
            ..ChannelParams::FORECASTING
        };
        let cfg = ReservoirConfig {
            virtual_nodes: 1,
            ..Default::default()
        };
        let samples: Vec<f64> = (0..=300).map(|i| i as f64 / 300.0).collect();
        let tr = trace(samples, 0.01);
        let s = build_states(&tr, &p, &cfg, 3).unwrap();
        for n in 0..3 {
            assert_eq!(s[(n, 0)], tr.sample_near((n + 1) as f64).unwrap());
        }
    }

    #[test]
    fn ramp_states() {
        // b(t) = t / horizon on a grid that contains the node offsets.
        let horizon = 2.0;
        let dt = 0.125;
        let samples: Vec<f64> = (0..=16).map(|i| i as f64 * dt / horizon).collect();
        let p = ChannelParams {
            symbol_duration: 1.0,
            ..ChannelParams::FORECASTING
        };
        let cfg = ReservoirConfig {
            virtual_nodes: 4,
            ..Default::default()
        };
        let s = build_states(&trace(samples, dt), &p, &cfg, 2).unwrap();
        let row: Vec<f64> = s.row(0).iter().copied().collect();
        assert_eq!(
            row,
            vec![0.25 / horizon, 0.5 / horizon, 0.75 / horizon, 1.0 / horizon]
        );
    }

    #[test]
    fn short_trace_is_rejected() {
        let p = ChannelParams::FORECASTING;
        let tr = trace(vec![0.1; 50], p.symbol_duration / 200.0);
        assert!(build_states(&tr, &p, &ReservoirConfig::default(), 2).is_err());
        let coarse = trace(vec![0.1; 50], p.symbol_duration / 10.0);
        assert!(build_states(&coarse, &p, &ReservoirConfig::default(), 1).is_err());
    }

    fn indexed_states(symbols: usize, m: usize) -> DMatrix<f64> {
        DMatrix::from_fn(symbols, m, |n, j| (n * 10 + j) as f64)
    }

    #[test]
    fn window_one_rows_are_states_plus_bias() {
        let cfg = ReservoirConfig {
            memory_window: 1,
            washout: 0,
            ..Default::default()
        };
        let s = indexed_states(3, 2);
        let ds = assemble_dataset(&s, &[1.0, 2.0, 3.0], &cfg).unwrap();
        assert_eq!(
            ds.states.row(1).iter().copied().collect::<Vec<_>>(),
            vec![10.0, 11.0, 1.0]
        );
        assert_eq!(ds.len(), 3);
    }

    #[test]
    fn window_two_after_washout() {
        let cfg = ReservoirConfig {
            memory_window: 2,
            washout: 4,
            ..Default::default()
        };
        let s = indexed_states(7, 1);
        let y: Vec<f64> = (0..7).map(f64::from).collect();
        let ds = assemble_dataset(&s, &y, &cfg).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.symbols, vec![5, 6]);
        assert_eq!(
            ds.states.row(0).iter().copied().collect::<Vec<_>>(),
            vec![40.0, 50.0, 1.0]
        );
        assert_eq!(ds.targets[0], 5.0);
    }

    #[test]
    fn row_count_matches_enumeration() {
        for (symbols, washout, l) in [(100, 10, 5), (60, 0, 1), (30, 7, 9), (12, 2, 10)] {
            let cfg = ReservoirConfig {
                memory_window: l,
                washout,
                ..Default::default()
            };
            let expected = (0..symbols)
                .filter(|&n| n + 1 >= l && n + 1 - l >= washout)
                .count();
            let ds =
                assemble_dataset(&indexed_states(symbols, 2), &vec![0.0; symbols], &cfg).unwrap();
            assert_eq!(ds.len(), expected);
            assert!(ds.symbols.iter().all(|&n| n + 1 - l >= washout));
        }
        let cfg = ReservoirConfig {
            memory_window: 5,
            washout: 10,
            ..Default::default()
        };
        let ds = assemble_dataset(&indexed_states(100, 2), &[0.0; 100], &cfg).unwrap();
        assert_eq!(ds.len(), 86);
    }

    #[test]
    fn too_few_symbols() {
        let cfg = ReservoirConfig {
            memory_window: 3,
            washout: 5,
            ..Default::default()
        };
        assert!(assemble_dataset(&indexed_states(7, 1), &[0.0; 7], &cfg).is_err());
        assert!(assemble_dataset(&indexed_states(8, 1), &[0.0; 7], &cfg).is_err());
    }

    fn dataset(x: DMatrix<f64>, y: Vec<f64>) -> ReservoirDataset {
        let n = y.len();
        ReservoirDataset {
            states: x,
            targets: DVector::from_vec(y),
            symbols: (0..n).collect(),
        }
    }

    #[test]
    fn identity_design_returns_targets() {
        let y = vec![0.3, -1.2, 4.0, 0.0];
        let ds = dataset(DMatrix::identity(4, 4), y.clone());
        let w = train_readout(&ds, 0.0).unwrap();
        for (a, b) in w.weights.iter().zip(&y) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(w.diagnostic.is_none());
    }

    #[test]
    fn realizable_target_fits_exactly() {
        let x = DMatrix::from_fn(40, 5, |i, j| {
            ((i * 7 + j * 3) % 11) as f64 / 11.0 + (i * j) as f64 * 1e-2
        });
        let truth = DVector::from_vec(vec![0.5, -2.0, 1.5, 0.25, 3.0]);
        let y = &x * &truth;
        let ds = dataset(x, y.iter().copied().collect());
        let w = train_readout(&ds, 0.0).unwrap();
        let pred = predict_all(&w, &ds).unwrap();
        let e = nrmse(ds.targets.as_slice(), &pred).unwrap();
        assert!(e <= 1e-10, "{e}");
    }

    #[test]
    fn rank_deficient_design_reports_diagnostic() {
        let x = DMatrix::from_fn(10, 3, |i, j| if j == 2 { i as f64 } else { (i + j) as f64 });
        // column 2 duplicates column 0
        let ds = dataset(x, (0..10).map(|i| i as f64 * 2.0).collect());
        let w = train_readout(&ds, 0.0).unwrap();
        assert!(w.diagnostic.is_some());
        // minimum norm splits weight evenly between duplicated columns
        assert!((w.weights[0] - w.weights[2]).abs() < 1e-10);
    }

    #[test]
    fn predict_checks_dimensions() {
        let w = ReadoutWeights {
            weights: vec![0.0; 3],
            diagnostic: None,
        };
        assert_eq!(predict(&w, &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!(predict(&w, &[1.0]).is_err());
        let bias = ReadoutWeights {
            weights: vec![0.0, 0.0, 1.0],
            diagnostic: None,
        };
        assert_eq!(predict(&bias, &[0.3, 0.9, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn split_is_contiguous() {
        let ds = dataset(
            DMatrix::from_fn(10, 1, |i, _| i as f64),
            (0..10).map(f64::from).collect(),
        );
        let (tr, te) = ds.split(0.7).unwrap();
        assert_eq!(tr.symbols, (0..7).collect::<Vec<_>>());
        assert_eq!(te.symbols, vec![7, 8, 9]);
        assert!(ds.split(0.01).is_err());
    }
}
