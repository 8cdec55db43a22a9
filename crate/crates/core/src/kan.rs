//! Layered KAN composition `g = Phi_D o ... o Phi_1 (z0)`.
//!
//! Every node sums its incoming edges in ascending input order. The edge from
//! input `i` to output `j` of a layer lives at index `i * d_out + j`, and the
//! flat parameter order is: layers in order, edges in index order, and for each
//! edge its coefficients followed by `w_base` then `w_spline`.

use std::ops::{Deref, DerefMut};

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bspline::{KnotVector, SplineEdge};
use crate::error::{Error, Result};

/// Flat view of every trainable scalar of a [`KanNetwork`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KanLayer {
    d_in: usize,
    d_out: usize,
    edges: Vec<SplineEdge>,
}

impl KanLayer {
    pub fn new(d_in: usize, d_out: usize, edges: Vec<SplineEdge>) -> Result<Self> {
        if edges.len() != d_in * d_out {
            return Err(Error::Widths {
                widths: vec![d_in, d_out],
                reason: format!("{} edges for a {d_in}x{d_out} layer", edges.len()),
            });
        }
        let (p, j) = (edges[0].knots().degree(), edges[0].knots().interior_count());
        if edges
            .iter()
            .any(|e| e.knots().degree() != p || e.knots().interior_count() != j)
        {
            return Err(Error::Knots("edges of one layer must share degree and knot count".into()));
        }
        Ok(Self { d_in, d_out, edges })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn edge(&self, i: usize, j: usize) -> &SplineEdge {
        &self.edges[i * self.d_out + j]
    }

    pub fn edge_mut(&mut self, i: usize, j: usize) -> &mut SplineEdge {
        &mut self.edges[i * self.d_out + j]
    }

    pub fn edges(&self) -> &[SplineEdge] {
        &self.edges
    }

    fn apply(&self, input: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, &z) in input.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += self.edges[i * self.d_out + j].eval(z);
            }
        }
    }

    fn param_count(&self) -> usize {
        self.edges.iter().map(SplineEdge::param_count).sum()
    }
}

/// Edge initialisation knobs. Degree and interior knot count are shared by
/// every edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    pub degree: usize,
    pub interior_count: usize,
    pub noise_scale: f64,
    pub scale_base_mu: f64,
    pub scale_base_sigma: f64,
    pub scale_sp: f64,
    pub grid_range: (f64, f64),
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            degree: 3,
            interior_count: 3,
            noise_scale: 0.3,
            scale_base_mu: 0.0,
            scale_base_sigma: 1.0,
            scale_sp: 1.0,
            grid_range: (-1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KanNetwork {
    widths: Vec<usize>,
    layers: Vec<KanLayer>,
}

fn check_widths(widths: &[usize]) -> Result<()> {
    let bad = |reason: &str| Error::Widths {
        widths: widths.to_vec(),
        reason: reason.into(),
    };
    if widths.len() < 2 {
        return Err(bad("need at least an input and an output width"));
    }
    if widths.contains(&0) {
        return Err(bad("zero width"));
    }
    if *widths.last().unwrap() != 1 {
        return Err(bad("final width must be 1"));
    }
    Ok(())
}

impl KanNetwork {
    pub fn from_layers(layers: Vec<KanLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Widths {
                widths: vec![],
                reason: "no layers".into(),
            });
        }
        let mut widths = vec![layers[0].d_in];
        for (l, layer) in layers.iter().enumerate() {
            if layer.d_in != *widths.last().unwrap() {
                return Err(Error::Dimension {
                    layer: l,
                    expected: *widths.last().unwrap(),
                    got: layer.d_in,
                });
            }
            widths.push(layer.d_out);
        }
        check_widths(&widths)?;
        Ok(Self { widths, layers })
    }

    /// Random initialisation: coefficients `~ N(0, (noise_scale / sqrt(d_in))^2)`,
    /// `w_base ~ N(mu, sigma^2) / sqrt(d_in)`, `w_spline = scale_sp`.
    pub fn init(widths: &[usize], cfg: &InitConfig, seed: u64) -> Result<Self> {
        check_widths(widths)?;
        let (lo, hi) = cfg.grid_range;
        let knots = KnotVector::uniform(cfg.degree, cfg.interior_count, lo, hi)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for w in widths.windows(2) {
            let (d_in, d_out) = (w[0], w[1]);
            let scale = 1.0 / (d_in as f64).sqrt();
            let coef = Normal::new(0.0, cfg.noise_scale * scale)
                .map_err(|e| Error::Config(format!("noise_scale: {e}")))?;
            let base = Normal::new(cfg.scale_base_mu, cfg.scale_base_sigma)
                .map_err(|e| Error::Config(format!("scale_base_sigma: {e}")))?;
            let mut edges = Vec::with_capacity(d_in * d_out);
            for _ in 0..d_in * d_out {
                let theta: Vec<f64> = (0..knots.dim()).map(|_| coef.sample(&mut rng)).collect();
                let w_base = base.sample(&mut rng) * scale;
                edges.push(SplineEdge::new(knots.clone(), theta, w_base, cfg.scale_sp)?);
            }
            layers.push(KanLayer::new(d_in, d_out, edges)?);
        }
        Self::from_layers(layers)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn layers(&self) -> &[KanLayer] {
        &self.layers
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut KanLayer {
        &mut self.layers[l]
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    fn max_width(&self) -> usize {
        *self.widths.iter().max().unwrap()
    }

    /// Scalar output for one input vector.
    pub fn forward(&self, z0: &[f64]) -> Result<f64> {
        if z0.len() != self.widths[0] {
            return Err(Error::Dimension {
                layer: 0,
                expected: self.widths[0],
                got: z0.len(),
            });
        }
        let w = self.max_width();
        let mut a = z0.to_vec();
        a.resize(w, 0.0);
        let mut b = vec![0.0; w];
        for layer in &self.layers {
            layer.apply(&a[..layer.d_in], &mut b[..layer.d_out]);
            std::mem::swap(&mut a, &mut b);
        }
        Ok(a[0])
    }

    fn check_factored(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() + 1 != self.widths[0] {
            return Err(Error::Dimension {
                layer: 0,
                expected: self.widths[0] - 1,
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// First-layer pieces `F_j(x_i)` (n x d1) and `G_j(t_k)` (K x d1).
    fn first_layer_parts(&self, x: &ArrayView2<f64>, t: &[f64]) -> (Array2<f64>, Array2<f64>) {
        let layer = &self.layers[0];
        let d = x.ncols();
        let d1 = layer.d_out;
        let mut f = Array2::zeros((x.nrows(), d1));
        for (row, mut out) in x.outer_iter().zip(f.outer_iter_mut()) {
            for c in 0..d {
                for j in 0..d1 {
                    out[j] += layer.edge(c, j).eval(row[c]);
                }
            }
        }
        let mut g = Array2::zeros((t.len(), d1));
        for (k, &tk) in t.iter().enumerate() {
            for j in 0..d1 {
                g[[k, j]] = layer.edge(d, j).eval(tk);
            }
        }
        (f, g)
    }

    /// `g(x_i, t_k)` for every row of `x` and every time in `t`, with the first
    /// layer split into a covariate part and a time part joined by broadcast.
    pub fn forward_factored(&self, x: ArrayView2<f64>, t: &[f64]) -> Result<Array2<f64>> {
        self.check_factored(&x)?;
        let (f, g) = self.first_layer_parts(&x, t);
        let (n, kk) = (x.nrows(), t.len());
        let w = self.max_width();
        let d1 = self.widths[1];
        let mut out = Array2::zeros((n, kk));
        let mut a = vec![0.0; w];
        let mut b = vec![0.0; w];
        for i in 0..n {
            for k in 0..kk {
                for j in 0..d1 {
                    a[j] = f[[i, j]] + g[[k, j]];
                }
                for layer in &self.layers[1..] {
                    layer.apply(&a[..layer.d_in], &mut b[..layer.d_out]);
                    std::mem::swap(&mut a, &mut b);
                }
                out[[i, k]] = a[0];
            }
        }
        Ok(out)
    }

    /// Batch forward over independent points (rows of `z`), recording what the
    /// backward pass needs.
    pub fn forward_points_tape(&self, z: ArrayView2<f64>) -> Result<Tape> {
        if z.ncols() != self.widths[0] {
            return Err(Error::Dimension {
                layer: 0,
                expected: self.widths[0],
                got: z.ncols(),
            });
        }
        let first = self.apply_layer_rows(0, z);
        Ok(self.finish_tape(FirstInput::Points(z.to_owned()), first))
    }

    /// Factored forward over the cross product `x x t`, recording a tape.
    /// Point `(i, k)` has flat index `i * t.len() + k`.
    pub fn forward_factored_tape(&self, x: ArrayView2<f64>, t: &[f64]) -> Result<Tape> {
        self.check_factored(&x)?;
        let (f, g) = self.first_layer_parts(&x, t);
        let (n, kk) = (x.nrows(), t.len());
        let d1 = self.widths[1];
        let mut z1 = Array2::zeros((n * kk, d1));
        for i in 0..n {
            for k in 0..kk {
                for j in 0..d1 {
                    z1[[i * kk + k, j]] = f[[i, j]] + g[[k, j]];
                }
            }
        }
        Ok(self.finish_tape(
            FirstInput::Factored {
                x: x.to_owned(),
                t: t.to_vec(),
            },
            z1,
        ))
    }

    fn apply_layer_rows(&self, l: usize, input: ArrayView2<f64>) -> Array2<f64> {
        let layer = &self.layers[l];
        let mut out = Array2::zeros((input.nrows(), layer.d_out));
        for (row, mut o) in input.outer_iter().zip(out.outer_iter_mut()) {
            let o = o.as_slice_mut().unwrap();
            match row.as_slice() {
                Some(r) => layer.apply(r, o),
                None => layer.apply(&row.to_vec(), o),
            }
        }
        out
    }

    fn finish_tape(&self, first: FirstInput, z1: Array2<f64>) -> Tape {
        let mut hidden = vec![z1];
        for l in 1..self.layers.len() {
            let next = self.apply_layer_rows(l, hidden.last().unwrap().view());
            hidden.push(next);
        }
        let out = hidden.pop().unwrap();
        Tape {
            first,
            hidden,
            output: out.column(0).to_vec(),
        }
    }

    /// Inputs seen by every layer for a batch of points: element `l` holds the
    /// rows fed to layer `l`.
    pub fn layer_inputs(&self, z: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        let tape = self.forward_points_tape(z)?;
        let FirstInput::Points(z0) = tape.first else {
            unreachable!()
        };
        let mut all = vec![z0];
        all.extend(tape.hidden);
        Ok(all)
    }

    /// Reverse-mode accumulation of `sum_p seed[p] * d g_p / d params`.
    pub fn backward(&self, tape: &Tape, seed: &[f64]) -> ParamVector {
        assert_eq!(seed.len(), tape.output.len(), "seed length must match tape outputs");
        let offsets = self.edge_offsets();
        let mut grad = ParamVector::zeros(self.param_count());
        let npts = seed.len();
        // upstream gradient w.r.t. the output of the current layer
        let mut upstream = Array2::from_shape_vec((npts, 1), seed.to_vec()).unwrap();
        for l in (1..self.layers.len()).rev() {
            let input = &tape.hidden[l - 1];
            let layer = &self.layers[l];
            let mut down = Array2::zeros((npts, layer.d_in));
            for p in 0..npts {
                for i in 0..layer.d_in {
                    let z = input[[p, i]];
                    let mut dz = 0.0;
                    for j in 0..layer.d_out {
                        let u = upstream[[p, j]];
                        if u == 0.0 {
                            continue;
                        }
                        let e = i * layer.d_out + j;
                        let edge = &layer.edges[e];
                        dz += u * accumulate_edge(edge, z, u, true, &mut grad[offsets[l][e]..]);
                    }
                    down[[p, i]] = dz;
                }
            }
            upstream = down;
        }
        let layer = &self.layers[0];
        match &tape.first {
            FirstInput::Points(z) => {
                for p in 0..npts {
                    for i in 0..layer.d_in {
                        for j in 0..layer.d_out {
                            let u = upstream[[p, j]];
                            if u != 0.0 {
                                let e = i * layer.d_out + j;
                                accumulate_edge(&layer.edges[e], z[[p, i]], u, false, &mut grad[offsets[0][e]..]);
                            }
                        }
                    }
                }
            }
            FirstInput::Factored { x, t } => {
                let (n, kk) = (x.nrows(), t.len());
                let d = x.ncols();
                let d1 = layer.d_out;
                let mut df = Array2::<f64>::zeros((n, d1));
                let mut dg = Array2::<f64>::zeros((kk, d1));
                for i in 0..n {
                    for k in 0..kk {
                        for j in 0..d1 {
                            let u = upstream[[i * kk + k, j]];
                            df[[i, j]] += u;
                            dg[[k, j]] += u;
                        }
                    }
                }
                for i in 0..n {
                    for c in 0..d {
                        for j in 0..d1 {
                            let u = df[[i, j]];
                            if u != 0.0 {
                                let e = c * d1 + j;
                                accumulate_edge(&layer.edges[e], x[[i, c]], u, false, &mut grad[offsets[0][e]..]);
                            }
                        }
                    }
                }
                for (k, &tk) in t.iter().enumerate() {
                    for j in 0..d1 {
                        let u = dg[[k, j]];
                        if u != 0.0 {
                            let e = d * d1 + j;
                            accumulate_edge(&layer.edges[e], tk, u, false, &mut grad[offsets[0][e]..]);
                        }
                    }
                }
            }
        }
        grad
    }

    fn edge_offsets(&self) -> Vec<Vec<usize>> {
        let mut off = 0;
        self.layers
            .iter()
            .map(|layer| {
                layer
                    .edges
                    .iter()
                    .map(|e| {
                        let o = off;
                        off += e.param_count();
                        o
                    })
                    .collect()
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(KanLayer::param_count).sum()
    }

    pub fn params(&self) -> ParamVector {
        let mut v = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            for e in &layer.edges {
                v.extend_from_slice(e.coefficients());
                v.push(e.w_base());
                v.push(e.w_spline());
            }
        }
        ParamVector(v)
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        let expected = self.param_count();
        if params.len() != expected {
            return Err(Error::ParamLength {
                expected,
                got: params.len(),
            });
        }
        let mut off = 0;
        for layer in &mut self.layers {
            for e in &mut layer.edges {
                let nc = e.coefficients().len();
                e.coefficients_mut().copy_from_slice(&params[off..off + nc]);
                e.set_weights(params[off + nc], params[off + nc + 1]);
                off += nc + 2;
            }
        }
        Ok(())
    }
}

/// Adds `u * d edge(z) / d (theta, w_base, w_spline)` into `grad`, which starts
/// at the edge's first parameter. Returns the edge's input derivative when
/// `chain` is set, zero otherwise.
fn accumulate_edge(edge: &SplineEdge, z: f64, u: f64, chain: bool, grad: &mut [f64]) -> f64 {
    let ev = edge.eval_parts(z, chain);
    let ws = edge.w_spline();
    for r in 0..ev.order {
        grad[ev.first + r] += u * ws * ev.basis[r];
    }
    let nc = edge.coefficients().len();
    grad[nc] += u * ev.silu;
    grad[nc + 1] += u * ev.spline;
    ev.input_derivative
}

#[derive(Debug, Clone)]
enum FirstInput {
    Points(Array2<f64>),
    Factored { x: Array2<f64>, t: Vec<f64> },
}

/// Recorded forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    first: FirstInput,
    /// Inputs to layers `1..D`.
    hidden: Vec<Array2<f64>>,
    output: Vec<f64>,
}

impl Tape {
    /// Network outputs, one per point.
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}
