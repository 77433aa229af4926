//! Exact simulation of the shared-start absorption mechanism.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::error::{MphError, Result};
use crate::model::{MphModel, SubIntensityMatrix};

/// `n x d` matrix of strictly positive observations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl SampleMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(MphError::InvalidArgument("sample needs at least one column".into()));
        }
        if values.len() != n * d {
            return Err(MphError::DimensionMismatch(format!(
                "{} values for a {n}x{d} sample",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(MphError::validation(
                format!("row {}, column {}", pos / d, pos % d),
                format!("observations must be finite and > 0, got {}", values[pos]),
            ));
        }
        Ok(Self { n, d, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().position(|r| r.len() != d) {
            return Err(MphError::DimensionMismatch(format!("row {r} has {} columns, expected {d}", rows[r].len())));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.d
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.d..(r + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.d + c]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.rows().map(|r| r[c]).collect()
    }

    pub fn column_means(&self) -> Vec<f64> {
        (0..self.d)
            .map(|c| self.rows().map(|r| r[c]).sum::<f64>() / self.n as f64)
            .collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Applies `f(column, value)` to every entry.
    pub fn map(&self, f: impl Fn(usize, f64) -> f64) -> Result<Self> {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &v)| f(k % self.d, v))
            .collect();
        Self::new(self.n, self.d, values)
    }

    /// Stacks `self` on top of `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.d != other.d {
            return Err(MphError::DimensionMismatch(format!("{} vs {} columns", self.d, other.d)));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Self::new(self.n + other.n, self.d, values)
    }
}

/// Latent path counts aggregated over a simulated sample.
///
/// `n_trans[i]` is row-major `p x p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStats {
    pub b: Vec<u64>,
    pub z: Vec<Vec<f64>>,
    pub n_trans: Vec<Vec<u64>>,
    pub n_exit: Vec<Vec<u64>>,
}

impl PathStats {
    fn zeros(p: usize, d: usize) -> Self {
        Self {
            b: vec![0; p],
            z: vec![vec![0.0; p]; d],
            n_trans: vec![vec![0; p * p]; d],
            n_exit: vec![vec![0; p]; d],
        }
    }

    fn add(&mut self, other: &Self) {
        let add_u = |a: &mut Vec<u64>, b: &Vec<u64>| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add_u(&mut self.b, &other.b);
        for i in 0..self.z.len() {
            self.z[i].iter_mut().zip(&other.z[i]).for_each(|(x, y)| *x += y);
            add_u(&mut self.n_trans[i], &other.n_trans[i]);
            add_u(&mut self.n_exit[i], &other.n_exit[i]);
        }
    }

    pub fn trans(&self, i: usize, k: usize, s: usize) -> u64 {
        let p = self.b.len();
        self.n_trans[i][k * p + s]
    }
}

/// Largest order accepted by [`sample_with_paths`].
pub const PATH_STATS_MAX_ORDER: usize = 1024;

const EXIT: usize = usize::MAX;
const CHUNK: usize = 256;

/// Jump table of one margin: per state, the total rate and the cumulative
/// probabilities over off-diagonal targets in state order, then exit.
struct JumpTable {
    rate: Vec<f64>,
    jumps: Vec<Vec<(usize, f64)>>,
}

impl JumpTable {
    fn new(t: &SubIntensityMatrix) -> Self {
        let p = t.order();
        let exit = t.exit_vector();
        let mut rate = vec![0.0; p];
        let mut jumps = vec![Vec::new(); p];
        for block in t.blocks() {
            for (a, &k) in block.states.iter().enumerate() {
                let total = -block.generator[(a, a)];
                rate[k] = total;
                let mut targets: Vec<(usize, f64)> = block
                    .states
                    .iter()
                    .enumerate()
                    .filter(|&(c, _)| c != a && block.generator[(a, c)] > 0.0)
                    .map(|(c, &s)| (s, block.generator[(a, c)]))
                    .collect();
                targets.sort_by_key(|&(s, _)| s);
                if exit[k] > 0.0 {
                    targets.push((EXIT, exit[k]));
                }
                let mut acc = 0.0;
                let sum: f64 = targets.iter().map(|&(_, r)| r).sum();
                for tr in &mut targets {
                    acc += tr.1;
                    tr.1 = acc / sum;
                }
                if let Some(last) = targets.last_mut() {
                    last.1 = 1.0;
                }
                jumps[k] = targets;
            }
        }
        Self { rate, jumps }
    }

    fn next(&self, k: usize, u: f64) -> usize {
        let list = &self.jumps[k];
        list.iter().find(|&&(_, c)| u < c).unwrap_or(&list[list.len() - 1]).0
    }
}

struct Simulator {
    start: Vec<(usize, f64)>,
    tables: Vec<JumpTable>,
    p: usize,
}

impl Simulator {
    fn new(model: &MphModel) -> Self {
        let mut acc = 0.0;
        let mut start: Vec<(usize, f64)> = model
            .pi()
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(j, &w)| {
                acc += w;
                (j, acc)
            })
            .collect();
        if let Some(last) = start.last_mut() {
            last.1 = f64::INFINITY;
        }
        Self {
            start,
            tables: model.components().iter().map(JumpTable::new).collect(),
            p: model.order(),
        }
    }

    fn row(&self, rng: &mut ChaCha8Rng, out: &mut [f64], mut stats: Option<&mut PathStats>) {
        let u: f64 = rng.random();
        let j0 = self.start.iter().find(|&&(_, c)| u < c).expect("last entry is infinite").0;
        if let Some(s) = stats.as_deref_mut() {
            s.b[j0] += out.len() as u64;
        }
        for (i, table) in self.tables.iter().enumerate() {
            let mut k = j0;
            let mut time = 0.0;
            loop {
                let hold: f64 = rng.sample::<f64, _>(Exp1) / table.rate[k];
                time += hold;
                let next = table.next(k, rng.random());
                if let Some(s) = stats.as_deref_mut() {
                    s.z[i][k] += hold;
                    if next == EXIT {
                        s.n_exit[i][k] += 1;
                    } else {
                        s.n_trans[i][k * self.p + next] += 1;
                    }
                }
                if next == EXIT {
                    break;
                }
                k = next;
            }
            out[i] = time;
        }
    }
}

fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

/// Draws `n` i.i.d. rows. Row `r` uses stream `r` of a ChaCha8 generator
/// keyed by `seed`, so the output does not depend on the thread count.
pub fn sample(model: &MphModel, n: usize, seed: u64) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(MphError::InvalidArgument("n must be positive".into()));
    }
    model.validate()?;
    let sim = Simulator::new(model);
    let d = model.dim();
    let mut values = vec![0.0; n * d];
    values.par_chunks_mut(d).enumerate().for_each(|(r, out)| {
        sim.row(&mut row_rng(seed, r), out, None);
    });
    SampleMatrix::new(n, d, values)
}

/// As [`sample`], also returning the aggregated latent path statistics.
/// Rows are identical to those of [`sample`] with the same seed.
pub fn sample_with_paths(model: &MphModel, n: usize, seed: u64) -> Result<(SampleMatrix, PathStats)> {
    if n == 0 {
        return Err(MphError::InvalidArgument("n must be positive".into()));
    }
    model.validate()?;
    let p = model.order();
    if p > PATH_STATS_MAX_ORDER {
        return Err(MphError::Unsupported(format!(
            "path statistics limited to order {PATH_STATS_MAX_ORDER}, model has {p}"
        )));
    }
    let sim = Simulator::new(model);
    let d = model.dim();
    let mut values = vec![0.0; n * d];
    let partial: Vec<PathStats> = values
        .par_chunks_mut(d * CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut stats = PathStats::zeros(p, d);
            for (k, out) in chunk.chunks_mut(d).enumerate() {
                sim.row(&mut row_rng(seed, c * CHUNK + k), out, Some(&mut stats));
            }
            stats
        })
        .collect();
    let mut stats = PathStats::zeros(p, d);
    for s in &partial {
        stats.add(s);
    }
    Ok((SampleMatrix::new(n, d, values)?, stats))
}
