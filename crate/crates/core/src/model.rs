//! Sub-intensity matrices, the mPH model type and its JSON form.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MphError, Result};
use crate::linalg::{inverse_power, matrix_exponential_unchecked, mittag_leffler_matrix, KernelConfig};

/// Tolerance on `Σπ = 1`.
pub const PI_SUM_TOL: f64 = 1e-12;

/// A group of states that only communicate among themselves.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct StateBlock {
    pub(crate) states: Vec<usize>,
    pub(crate) generator: DMatrix<f64>,
}

/// Transient generator block `T` of one marginal chain, with exit vector
/// `t = -T·1`.
///
/// Internally the matrix is stored as the diagonal blocks of its
/// communicating classes (connected components of the transition graph).
/// A dense random sub-intensity is a single block; large structured models
/// such as Erlang mixtures never materialize the full `p x p` array.
#[derive(Debug, Clone, PartialEq)]
pub struct SubIntensityMatrix {
    order: usize,
    blocks: Vec<StateBlock>,
    location: Vec<(usize, usize)>,
}

impl SubIntensityMatrix {
    /// Validates and wraps a dense sub-intensity matrix.
    pub fn new(dense: DMatrix<f64>) -> Result<Self> {
        check_dense(&dense, "T")?;
        let p = dense.nrows();
        let comps = components(p, |r, c| dense[(r, c)] != 0.0);
        let blocks = comps
            .into_iter()
            .map(|states| {
                let k = states.len();
                let generator = DMatrix::from_fn(k, k, |r, c| dense[(states[r], states[c])]);
                StateBlock { states, generator }
            })
            .collect();
        Ok(Self::from_parts(p, blocks))
    }

    /// Builds a matrix from disjoint communicating blocks covering `0..order`.
    /// Each entry is `(states, generator)` with `generator[(a, b)]` the rate
    /// from `states[a]` to `states[b]`.
    pub fn from_blocks(order: usize, parts: Vec<(Vec<usize>, DMatrix<f64>)>) -> Result<Self> {
        let mut seen = vec![false; order];
        let mut blocks = Vec::new();
        for (states, generator) in parts {
            if generator.nrows() != states.len() || generator.ncols() != states.len() {
                return Err(MphError::DimensionMismatch(format!(
                    "block with {} states has a {}x{} generator",
                    states.len(),
                    generator.nrows(),
                    generator.ncols()
                )));
            }
            for &s in &states {
                if s >= order || seen[s] {
                    return Err(MphError::validation("T", format!("state {s} missing or repeated in block list")));
                }
                seen[s] = true;
            }
            check_dense(&generator, "T block")?;
            // A supplied block may itself split further.
            let k = states.len();
            for sub in components(k, |r, c| generator[(r, c)] != 0.0) {
                let m = sub.len();
                let g = DMatrix::from_fn(m, m, |r, c| generator[(sub[r], sub[c])]);
                let global: Vec<usize> = sub.iter().map(|&i| states[i]).collect();
                blocks.push(sort_block(global, g));
            }
        }
        if let Some(miss) = seen.iter().position(|s| !s) {
            return Err(MphError::validation("T", format!("state {miss} not covered by any block")));
        }
        blocks.sort_by_key(|b| b.states[0]);
        Ok(Self::from_parts(order, blocks))
    }

    fn from_parts(order: usize, blocks: Vec<StateBlock>) -> Self {
        let mut location = vec![(0, 0); order];
        for (bi, b) in blocks.iter().enumerate() {
            for (li, &s) in b.states.iter().enumerate() {
                location[s] = (bi, li);
            }
        }
        Self { order, blocks, location }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub(crate) fn blocks(&self) -> &[StateBlock] {
        &self.blocks
    }

    /// Number of communicating blocks.
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Block index and position inside the block of a state.
    pub(crate) fn locate(&self, state: usize) -> (usize, usize) {
        self.location[state]
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        let (br, lr) = self.location[r];
        let (bc, lc) = self.location[c];
        if br != bc {
            0.0
        } else {
            self.blocks[br].generator[(lr, lc)]
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.order, self.order);
        for b in &self.blocks {
            for (a, &r) in b.states.iter().enumerate() {
                for (c, &s) in b.states.iter().enumerate() {
                    out[(r, s)] = b.generator[(a, c)];
                }
            }
        }
        out
    }

    /// Exit-rate vector `t = -T·1`.
    pub fn exit_vector(&self) -> DVector<f64> {
        let mut t = DVector::zeros(self.order);
        for b in &self.blocks {
            for (a, &r) in b.states.iter().enumerate() {
                t[r] = -b.generator.row(a).sum();
            }
        }
        t
    }

    /// `c·T`.
    pub fn scaled(&self, c: f64) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|b| StateBlock {
                states: b.states.clone(),
                generator: &b.generator * c,
            })
            .collect();
        Self::from_parts(self.order, blocks)
    }

    /// Applies a per-block linear map to `v`, block by block.
    pub(crate) fn apply_blockwise<F>(&self, v: &DVector<f64>, mut f: F) -> Result<DVector<f64>>
    where
        F: FnMut(&DMatrix<f64>, &DVector<f64>) -> Result<DVector<f64>>,
    {
        let mut out = DVector::zeros(self.order);
        for b in &self.blocks {
            let local = DVector::from_iterator(b.states.len(), b.states.iter().map(|&s| v[s]));
            let r = f(&b.generator, &local)?;
            for (a, &s) in b.states.iter().enumerate() {
                out[s] = r[a];
            }
        }
        Ok(out)
    }

    /// `e^{T x} v`.
    pub fn exp_apply(&self, x: f64, v: &DVector<f64>) -> DVector<f64> {
        self.apply_blockwise(v, |g, w| Ok(matrix_exponential_unchecked(&(g * x)) * w))
            .expect("exponential action is infallible")
    }

    /// `e^{T x} 1`, the per-state survival probabilities.
    pub fn survival_vector(&self, x: f64) -> DVector<f64> {
        self.exp_apply(x, &DVector::from_element(self.order, 1.0))
    }

    /// `e^{T x} t`, the per-state densities.
    pub fn density_vector(&self, x: f64) -> DVector<f64> {
        self.exp_apply(x, &self.exit_vector())
    }

    /// `(u I - T)^{-1} v` for `u >= 0`.
    pub fn resolvent_apply(&self, u: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.apply_blockwise(v, |g, w| {
            let k = g.nrows();
            let m = DMatrix::identity(k, k) * u - g;
            m.lu()
                .solve(w)
                .ok_or_else(|| MphError::Numerical("singular resolvent".into()))
        })
    }

    /// `(-T)^{-θ} v`.
    pub fn neg_power_apply(&self, theta: f64, v: &DVector<f64>, cfg: &KernelConfig) -> Result<DVector<f64>> {
        self.apply_blockwise(v, |g, w| Ok(inverse_power(&(-g), theta, cfg)? * w))
    }

    /// `E_{α,β}(T s) v`.
    pub fn mittag_leffler_apply(
        &self,
        alpha: f64,
        beta: f64,
        s: f64,
        v: &DVector<f64>,
        cfg: &KernelConfig,
    ) -> Result<DVector<f64>> {
        self.apply_blockwise(v, |g, w| Ok(mittag_leffler_matrix(&(g * s), alpha, beta, cfg)? * w))
    }
}

fn sort_block(states: Vec<usize>, generator: DMatrix<f64>) -> StateBlock {
    let mut idx: Vec<usize> = (0..states.len()).collect();
    idx.sort_by_key(|&i| states[i]);
    let k = idx.len();
    StateBlock {
        states: idx.iter().map(|&i| states[i]).collect(),
        generator: DMatrix::from_fn(k, k, |r, c| generator[(idx[r], idx[c])]),
    }
}

/// Connected components of the undirected graph with an edge wherever
/// `linked(r, c)` holds for `r != c`. States inside a component are sorted,
/// components are ordered by their smallest state.
fn components(p: usize, linked: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..p).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for r in 0..p {
        for c in 0..p {
            if r != c && linked(r, c) {
                let (a, b) = (find(&mut parent, r), find(&mut parent, c));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_slot = vec![usize::MAX; p];
    for s in 0..p {
        let r = find(&mut parent, s);
        if root_slot[r] == usize::MAX {
            root_slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_slot[r]].push(s);
    }
    groups
}

/// Sign pattern, finiteness, and invertibility checks of a dense sub-intensity.
fn check_dense(t: &DMatrix<f64>, path: &str) -> Result<()> {
    let p = t.nrows();
    if p == 0 || t.ncols() != p {
        return Err(MphError::validation(path, format!("must be square and non-empty, got {}x{}", p, t.ncols())));
    }
    for r in 0..p {
        let mut row_sum = 0.0;
        let mut scale = 0.0f64;
        for c in 0..p {
            let v = t[(r, c)];
            if !v.is_finite() {
                return Err(MphError::validation(format!("{path}[{r}][{c}]"), "entries must be finite"));
            }
            if r == c && !(v < 0.0) {
                return Err(MphError::validation(format!("{path}[{r}][{c}]"), "diagonal must be negative"));
            }
            if r != c && v < 0.0 {
                return Err(MphError::validation(format!("{path}[{r}][{c}]"), "off-diagonal must be nonnegative"));
            }
            row_sum += v;
            scale = scale.max(v.abs());
        }
        if row_sum > 1e-12 * scale {
            return Err(MphError::validation(format!("{path}[{r}]"), "row sum must be nonpositive"));
        }
    }
    // Invertible iff every state reaches a state with positive exit rate.
    let exits: Vec<bool> = (0..p)
        .map(|r| {
            let s: f64 = t.row(r).sum();
            let scale = t[(r, r)].abs();
            -s > 1e-14 * scale
        })
        .collect();
    let mut reaches = exits.clone();
    let mut changed = true;
    while changed {
        changed = false;
        for r in 0..p {
            if !reaches[r] && (0..p).any(|c| c != r && t[(r, c)] > 0.0 && reaches[c]) {
                reaches[r] = true;
                changed = true;
            }
        }
    }
    if let Some(r) = reaches.iter().position(|x| !x) {
        return Err(MphError::validation(
            format!("{path}[{r}]"),
            "state cannot reach absorption; matrix must be invertible",
        ));
    }
    Ok(())
}

/// `X ~ mPH(π, {T_1, …, T_d})`: `d` chains started in a common random state,
/// evolving independently until absorption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelJson", into = "ModelJson")]
pub struct MphModel {
    pi: DVector<f64>,
    components: Vec<SubIntensityMatrix>,
}

impl MphModel {
    pub fn new(pi: DVector<f64>, components: Vec<SubIntensityMatrix>) -> Result<Self> {
        let model = Self { pi, components };
        model.validate()?;
        Ok(model)
    }

    /// Builds a model from dense matrices.
    pub fn from_dense(pi: Vec<f64>, matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let comps = matrices
            .into_iter()
            .enumerate()
            .map(|(i, m)| {
                SubIntensityMatrix::new(m).map_err(|e| match e {
                    MphError::Validation { path, message } => MphError::Validation {
                        path: path.replacen('T', &format!("T[{i}]"), 1),
                        message,
                    },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(DVector::from_vec(pi), comps)
    }

    /// Checks every model invariant; the error names the first violation.
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(MphError::validation("T", "need at least one component (d >= 1)"));
        }
        let p = self.pi.len();
        if p == 0 {
            return Err(MphError::validation("pi", "must be non-empty"));
        }
        if let Some(j) = self.pi.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(MphError::validation(format!("pi[{j}]"), "pi entries must be finite and nonnegative"));
        }
        let sum: f64 = self.pi.iter().sum();
        if (sum - 1.0).abs() > PI_SUM_TOL {
            return Err(MphError::validation("pi", format!("pi not stochastic (sum = {sum})")));
        }
        for (i, t) in self.components.iter().enumerate() {
            if t.order() != p {
                return Err(MphError::validation(
                    format!("T[{i}]"),
                    format!("order {} does not match pi length {p}", t.order()),
                ));
            }
        }
        Ok(())
    }

    /// Number of transient states `p`.
    pub fn order(&self) -> usize {
        self.pi.len()
    }

    /// Number of margins `d`.
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn pi(&self) -> &DVector<f64> {
        &self.pi
    }

    pub fn components(&self) -> &[SubIntensityMatrix] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &SubIntensityMatrix {
        &self.components[i]
    }

    /// The sub-model made of the listed margins.
    pub fn select(&self, margins: &[usize]) -> Result<Self> {
        let comps = margins
            .iter()
            .map(|&i| {
                self.components
                    .get(i)
                    .cloned()
                    .ok_or_else(|| MphError::InvalidArgument(format!("margin {i} out of range (d = {})", self.dim())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.pi.clone(), comps)
    }

    /// Replaces margin `i`'s generator by `c·T_i`.
    pub fn with_scaled_component(&self, i: usize, c: f64) -> Self {
        let mut out = self.clone();
        out.components[i] = self.components[i].scaled(c);
        out
    }
}

/// Wire format: `{"p", "d", "pi", "T"}` with `T` a list of `d` row-major
/// `p x p` arrays. Exit vectors are not stored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelJson {
    pub p: usize,
    pub d: usize,
    pub pi: Vec<f64>,
    #[serde(rename = "T")]
    pub t: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<ModelJson> for MphModel {
    type Error = MphError;

    fn try_from(j: ModelJson) -> Result<Self> {
        if j.pi.len() != j.p {
            return Err(MphError::validation("pi", format!("length {} does not match p = {}", j.pi.len(), j.p)));
        }
        if j.t.len() != j.d {
            return Err(MphError::validation("T", format!("{} matrices given but d = {}", j.t.len(), j.d)));
        }
        let mut mats = Vec::with_capacity(j.d);
        for (i, rows) in j.t.iter().enumerate() {
            if rows.len() != j.p || rows.iter().any(|r| r.len() != j.p) {
                return Err(MphError::validation(format!("T[{i}]"), format!("must be {0}x{0}", j.p)));
            }
            mats.push(DMatrix::from_fn(j.p, j.p, |r, c| rows[r][c]));
        }
        MphModel::from_dense(j.pi, mats)
    }
}

impl From<MphModel> for ModelJson {
    fn from(m: MphModel) -> Self {
        let p = m.order();
        ModelJson {
            p,
            d: m.dim(),
            pi: m.pi.iter().copied().collect(),
            t: m
                .components
                .iter()
                .map(|c| {
                    let dense = c.to_dense();
                    (0..p).map(|r| (0..p).map(|s| dense[(r, s)]).collect()).collect()
                })
                .collect(),
        }
    }
}

impl MphModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: ModelJson =
            serde_json::from_str(s).map_err(|e| MphError::InvalidArgument(format!("model JSON: {e}")))?;
        Self::try_from(raw)
    }
}
