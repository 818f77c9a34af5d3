//! Transcription of a [`BolzaOcp`] into a finite NLP, and its solution.

mod banded;
mod solver;

pub use banded::{bandwidth, BandCholesky};
pub use solver::{solve_al, AlResult, NlpProblem, SolveStatus, SolverSettings, SparseRows};

use nalgebra::DMatrix;

use crate::collocation::{PiecewiseTrajectory, Scheme};
use crate::error::{invalid, Error, Result};
use crate::mesh::Mesh;
use crate::ocp::BolzaOcp;
use crate::tightening::BoxSet;

/// A time instant where `f` and/or `L` are evaluated.
#[derive(Debug, Clone, Copy)]
struct EvalPoint {
    t: f64,
    x: usize,
    u: Option<usize>,
}

/// `n` rows: `Σ coef·x[off..off+n] + Σ coef·f(point)`.
#[derive(Debug, Clone)]
struct Block {
    lin: Vec<(usize, f64)>,
    f: Vec<(usize, f64)>,
}

/// Finite-dimensional NLP on a fixed mesh.
///
/// Variables are laid out node by node (`x_k, u_k`, then the HS midpoint
/// pair), so the Hessian of the Lagrangian is banded.
#[derive(Debug, Clone)]
pub struct Transcription {
    ocp: BolzaOcp,
    mesh: Mesh,
    scheme: Scheme,
    n: usize,
    m: usize,
    nvar: usize,
    x_off: Vec<usize>,
    u_off: Vec<Option<usize>>,
    xm_off: Vec<usize>,
    um_off: Vec<usize>,
    points: Vec<EvalPoint>,
    cost_w: Vec<f64>,
    blocks: Vec<Block>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    node_boxes: Vec<BoxSet>,
}

/// Transcribes `ocp` on `mesh`. `tightened` optionally supplies one state box per mesh point.
pub fn transcribe(ocp: &BolzaOcp, mesh: &Mesh, scheme: Scheme, tightened: Option<&[BoxSet]>) -> Result<Transcription> {
    ocp.validate()?;
    if (mesh.t0() - ocp.t0).abs() > 1e-9 || (mesh.tf() - ocp.tf).abs() > 1e-9 {
        return Err(invalid("mesh does not span the OCP horizon"));
    }
    let (n, m) = (ocp.model.state_dim, ocp.model.input_dim);
    let k = mesh.num_segments();
    let node_boxes: Vec<BoxSet> = match tightened {
        Some(b) => {
            if b.len() != k + 1 {
                return Err(invalid("need one tightened box per mesh point"));
            }
            for (i, bx) in b.iter().enumerate() {
                if bx.dim() != n {
                    return Err(invalid("tightened box dimension mismatch"));
                }
                if bx.is_empty() {
                    return Err(Error::InfeasibleTightening { point: i });
                }
            }
            b.to_vec()
        }
        None => vec![ocp.state_box.clone(); k + 1],
    };

    let hs = scheme == Scheme::HermiteSimpson;
    let mut off = 0;
    let mut x_off = Vec::with_capacity(k + 1);
    let mut u_off = Vec::with_capacity(k + 1);
    let mut xm_off = Vec::new();
    let mut um_off = Vec::new();
    for node in 0..=k {
        x_off.push(off);
        off += n;
        let has_u = scheme != Scheme::ForwardEuler || node < k;
        if has_u {
            u_off.push(Some(off));
            off += m;
        } else {
            u_off.push(None);
        }
        if hs && node < k {
            xm_off.push(off);
            off += n;
            um_off.push(off);
            off += m;
        }
    }
    let nvar = off;

    let mut points: Vec<EvalPoint> = (0..=k)
        .map(|i| EvalPoint { t: mesh.points()[i], x: x_off[i], u: u_off[i] })
        .collect();
    if hs {
        for s in 0..k {
            let (a, b) = mesh.segment(s);
            points.push(EvalPoint { t: 0.5 * (a + b), x: xm_off[s], u: Some(um_off[s]) });
        }
    }

    let mut cost_w = vec![0.0; points.len()];
    let mut blocks = Vec::new();
    for s in 0..k {
        let h = mesh.segment_len(s);
        match scheme {
            Scheme::ForwardEuler => {
                cost_w[s] += h;
                blocks.push(Block { lin: vec![(x_off[s + 1], 1.0), (x_off[s], -1.0)], f: vec![(s, -h)] });
            }
            Scheme::Trapezoidal => {
                cost_w[s] += 0.5 * h;
                cost_w[s + 1] += 0.5 * h;
                blocks.push(Block {
                    lin: vec![(x_off[s + 1], 1.0), (x_off[s], -1.0)],
                    f: vec![(s, -0.5 * h), (s + 1, -0.5 * h)],
                });
            }
            Scheme::HermiteSimpson => {
                let mid = k + 1 + s;
                cost_w[s] += h / 6.0;
                cost_w[mid] += 4.0 * h / 6.0;
                cost_w[s + 1] += h / 6.0;
                blocks.push(Block {
                    lin: vec![(xm_off[s], 1.0), (x_off[s], -0.5), (x_off[s + 1], -0.5)],
                    f: vec![(s, -h / 8.0), (s + 1, h / 8.0)],
                });
                blocks.push(Block {
                    lin: vec![(x_off[s + 1], 1.0), (x_off[s], -1.0)],
                    f: vec![(s, -h / 6.0), (mid, -4.0 * h / 6.0), (s + 1, -h / 6.0)],
                });
            }
        }
    }

    let mut lower = vec![f64::NEG_INFINITY; nvar];
    let mut upper = vec![f64::INFINITY; nvar];
    for node in 0..=k {
        for i in 0..n {
            lower[x_off[node] + i] = node_boxes[node].lower[i];
            upper[x_off[node] + i] = node_boxes[node].upper[i];
        }
    }
    let mut set_u = |o: usize| {
        for j in 0..m {
            lower[o + j] = ocp.input_box.lower[j];
            upper[o + j] = ocp.input_box.upper[j];
        }
    };
    for o in u_off.iter().flatten() {
        set_u(*o);
    }
    for &o in &um_off {
        set_u(o);
    }
    // fixed endpoints override any box
    for i in 0..n {
        lower[i] = ocp.initial_state[i];
        upper[i] = ocp.initial_state[i];
    }
    if let Some(xf) = &ocp.terminal_state {
        for i in 0..n {
            lower[x_off[k] + i] = xf[i];
            upper[x_off[k] + i] = xf[i];
        }
    }

    Ok(Transcription {
        ocp: ocp.clone(),
        mesh: mesh.clone(),
        scheme,
        n,
        m,
        nvar,
        x_off,
        u_off,
        xm_off,
        um_off,
        points,
        cost_w,
        blocks,
        lower,
        upper,
        node_boxes,
    })
}

impl Transcription {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn ocp(&self) -> &BolzaOcp {
        &self.ocp
    }

    pub fn node_boxes(&self) -> &[BoxSet] {
        &self.node_boxes
    }

    /// Number of state variables at mesh points.
    pub fn num_state_vars(&self) -> usize {
        self.n * (self.mesh.num_segments() + 1)
    }

    /// Number of input variables at input nodes (midpoints excluded).
    pub fn num_input_vars(&self) -> usize {
        self.u_off.iter().flatten().count() * self.m
    }

    pub fn num_midpoint_vars(&self) -> usize {
        self.xm_off.len() * (self.n + self.m)
    }

    /// Bounds as `(lower, upper)`.
    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lower, &self.upper)
    }

    fn bc_rows(&self) -> usize {
        self.ocp.boundary_constraints.as_ref().map_or(0, |b| b.dim())
    }

    fn xu<'a>(&self, z: &'a [f64], p: &EvalPoint) -> (&'a [f64], &'a [f64]) {
        let x = &z[p.x..p.x + self.n];
        let u = match p.u {
            Some(o) => &z[o..o + self.m],
            None => &z[0..0],
        };
        (x, u)
    }

    fn x0_xf<'a>(&self, z: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        let k = self.mesh.num_segments();
        (&z[0..self.n], &z[self.x_off[k]..self.x_off[k] + self.n])
    }

    fn f_points(&self) -> Vec<bool> {
        let mut used = vec![false; self.points.len()];
        for b in &self.blocks {
            for &(p, _) in &b.f {
                used[p] = true;
            }
        }
        used
    }

    /// Packs node values from a trajectory (old polynomials evaluated at the new
    /// nodes, held constant past its horizon).
    pub fn initial_guess(&self, warm: Option<&PiecewiseTrajectory>) -> Vec<f64> {
        let mut z = vec![0.0; self.nvar];
        let mut buf_x = vec![0.0; self.n];
        let mut buf_u = vec![0.0; self.m];
        for p in &self.points {
            match warm {
                Some(tr) if tr.state_dim() == self.n && tr.input_dim() == self.m => {
                    tr.state_clamped(p.t, &mut buf_x);
                    tr.input_clamped(p.t, &mut buf_u);
                }
                _ => {
                    let frac = (p.t - self.ocp.t0) / (self.ocp.tf - self.ocp.t0);
                    for i in 0..self.n {
                        let end = self.ocp.terminal_state.as_ref().map_or(self.ocp.initial_state[i], |xf| xf[i]);
                        buf_x[i] = self.ocp.initial_state[i] * (1.0 - frac) + end * frac;
                    }
                    buf_u.iter_mut().for_each(|v| *v = 0.0);
                }
            }
            z[p.x..p.x + self.n].copy_from_slice(&buf_x);
            if let Some(o) = p.u {
                z[o..o + self.m].copy_from_slice(&buf_u);
            }
        }
        for i in 0..self.nvar {
            z[i] = z[i].clamp(self.lower[i], self.upper[i]);
        }
        z
    }

    /// Rebuilds the continuous trajectory from a decision vector.
    pub fn trajectory(&self, z: &[f64]) -> Result<PiecewiseTrajectory> {
        let k = self.mesh.num_segments();
        let x: Vec<Vec<f64>> = (0..=k).map(|i| z[self.x_off[i]..self.x_off[i] + self.n].to_vec()).collect();
        let u: Vec<Vec<f64>> = self
            .u_off
            .iter()
            .flatten()
            .map(|&o| z[o..o + self.m].to_vec())
            .collect();
        let um: Vec<Vec<f64>> = self.um_off.iter().map(|&o| z[o..o + self.m].to_vec()).collect();
        PiecewiseTrajectory::from_nodes(self.mesh.clone(), self.scheme, &self.ocp.model, &x, &u, &um)
    }
}

impl NlpProblem for Transcription {
    fn num_vars(&self) -> usize {
        self.nvar
    }

    fn num_eq(&self) -> usize {
        self.blocks.len() * self.n + self.bc_rows()
    }

    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn objective(&self, z: &[f64]) -> f64 {
        let mut v = 0.0;
        if let Some(l) = &self.ocp.stage_cost {
            for (p, w) in self.points.iter().zip(&self.cost_w) {
                if *w != 0.0 {
                    let (x, u) = self.xu(z, p);
                    v += w * l.value(p.t, x, u);
                }
            }
        }
        if let Some(phi) = &self.ocp.boundary_cost {
            let (x0, xf) = self.x0_xf(z);
            v += phi.value(x0, xf);
        }
        v
    }

    fn gradient(&self, z: &[f64], g: &mut [f64]) {
        g.iter_mut().for_each(|v| *v = 0.0);
        let (n, m) = (self.n, self.m);
        if let Some(l) = &self.ocp.stage_cost {
            let mut buf = vec![0.0; n + m];
            for (p, w) in self.points.iter().zip(&self.cost_w) {
                if *w == 0.0 {
                    continue;
                }
                let (x, u) = self.xu(z, p);
                l.gradient(p.t, x, u, &mut buf);
                for i in 0..n {
                    g[p.x + i] += w * buf[i];
                }
                if let Some(o) = p.u {
                    for j in 0..m {
                        g[o + j] += w * buf[n + j];
                    }
                }
            }
        }
        if let Some(phi) = &self.ocp.boundary_cost {
            let (x0, xf) = self.x0_xf(z);
            let mut buf = vec![0.0; 2 * n];
            phi.gradient(x0, xf, &mut buf);
            let kf = self.x_off[self.mesh.num_segments()];
            for i in 0..n {
                g[i] += buf[i];
                g[kf + i] += buf[n + i];
            }
        }
    }

    fn constraints(&self, z: &[f64], c: &mut [f64]) {
        let n = self.n;
        let used = self.f_points();
        let mut fv = vec![0.0; self.points.len() * n];
        for (pi, p) in self.points.iter().enumerate() {
            if used[pi] {
                let (x, u) = self.xu(z, p);
                self.ocp.model.eval_into(p.t, x, u, &mut fv[pi * n..(pi + 1) * n]);
            }
        }
        for (bi, b) in self.blocks.iter().enumerate() {
            let row = &mut c[bi * n..(bi + 1) * n];
            row.iter_mut().for_each(|v| *v = 0.0);
            for &(o, a) in &b.lin {
                for i in 0..n {
                    row[i] += a * z[o + i];
                }
            }
            for &(pi, a) in &b.f {
                for i in 0..n {
                    row[i] += a * fv[pi * n + i];
                }
            }
        }
        if let Some(bc) = &self.ocp.boundary_constraints {
            let (x0, xf) = self.x0_xf(z);
            let start = self.blocks.len() * n;
            bc.value(x0, xf, &mut c[start..start + bc.dim()]);
        }
    }

    fn jacobian(&self, z: &[f64]) -> SparseRows {
        let (n, m) = (self.n, self.m);
        let used = self.f_points();
        let jacs: Vec<Option<(DMatrix<f64>, DMatrix<f64>)>> = self
            .points
            .iter()
            .enumerate()
            .map(|(pi, p)| {
                used[pi].then(|| {
                    let (x, u) = self.xu(z, p);
                    self.ocp.model.jacobian(p.t, x, u)
                })
            })
            .collect();
        let mut rows = Vec::with_capacity(self.num_eq());
        for b in &self.blocks {
            for i in 0..n {
                let mut row = Vec::with_capacity(b.lin.len() + b.f.len() * (n + m));
                for &(o, a) in &b.lin {
                    row.push((o + i, a));
                }
                for &(pi, a) in &b.f {
                    let p = &self.points[pi];
                    let (fx, fu) = jacs[pi].as_ref().unwrap();
                    for j in 0..n {
                        let v = fx[(i, j)];
                        if v != 0.0 {
                            row.push((p.x + j, a * v));
                        }
                    }
                    if let Some(o) = p.u {
                        for j in 0..m {
                            let v = fu[(i, j)];
                            if v != 0.0 {
                                row.push((o + j, a * v));
                            }
                        }
                    }
                }
                rows.push(row);
            }
        }
        if let Some(bc) = &self.ocp.boundary_constraints {
            let (x0, xf) = self.x0_xf(z);
            let jac = bc.jacobian(x0, xf);
            let kf = self.x_off[self.mesh.num_segments()];
            for r in 0..bc.dim() {
                let mut row = Vec::new();
                for j in 0..n {
                    row.push((j, jac[(r, j)]));
                    row.push((kf + j, jac[(r, n + j)]));
                }
                rows.push(row);
            }
        }
        rows
    }

    fn hessian(&self, z: &[f64], mu: &[f64]) -> DMatrix<f64> {
        let (n, m) = (self.n, self.m);
        let mut hess = DMatrix::zeros(self.nvar, self.nvar);
        let scatter = |hess: &mut DMatrix<f64>, p: &EvalPoint, local: &DMatrix<f64>, w: f64| {
            let idx: Vec<usize> = (0..n)
                .map(|i| p.x + i)
                .chain(p.u.into_iter().flat_map(|o| (0..m).map(move |j| o + j)))
                .collect();
            for (a, &ia) in idx.iter().enumerate() {
                for (b, &ib) in idx.iter().enumerate() {
                    hess[(ia, ib)] += w * local[(a, b)];
                }
            }
        };
        if let Some(l) = &self.ocp.stage_cost {
            for (p, w) in self.points.iter().zip(&self.cost_w) {
                if *w != 0.0 {
                    let (x, u) = self.xu(z, p);
                    scatter(&mut hess, p, &l.hessian(p.t, x, u), *w);
                }
            }
        }
        // multiplier weights per evaluation point: ν_P = Σ coef·μ_block
        let mut nu = vec![0.0; self.points.len() * n];
        for (bi, b) in self.blocks.iter().enumerate() {
            for &(pi, a) in &b.f {
                for i in 0..n {
                    nu[pi * n + i] += a * mu[bi * n + i];
                }
            }
        }
        for (pi, p) in self.points.iter().enumerate() {
            let w = &nu[pi * n..(pi + 1) * n];
            if w.iter().all(|v| *v == 0.0) {
                continue;
            }
            let (x, u) = self.xu(z, p);
            let local = weighted_dynamics_hessian(&self.ocp.model, p.t, x, u, w);
            scatter(&mut hess, p, &local, 1.0);
        }
        let kf = self.x_off[self.mesh.num_segments()];
        let mut boundary = |local: DMatrix<f64>| {
            for a in 0..2 * n {
                let ia = if a < n { a } else { kf + a - n };
                for b in 0..2 * n {
                    let ib = if b < n { b } else { kf + b - n };
                    hess[(ia, ib)] += local[(a, b)];
                }
            }
        };
        if let Some(phi) = &self.ocp.boundary_cost {
            let (x0, xf) = self.x0_xf(z);
            boundary(phi.hessian(x0, xf));
        }
        if let Some(bc) = &self.ocp.boundary_constraints {
            let (x0, xf) = self.x0_xf(z);
            let start = self.blocks.len() * n;
            boundary(bc.weighted_hessian(x0, xf, &mu[start..start + bc.dim()]));
        }
        hess
    }
}

/// Hessian of `νᵀ f` w.r.t. stacked `(x, u)`, by differencing the Jacobian.
fn weighted_dynamics_hessian(model: &crate::dynamics::DynamicsModel, t: f64, x: &[f64], u: &[f64], nu: &[f64]) -> DMatrix<f64> {
    let (n, m) = (x.len(), u.len());
    let d = n + m;
    let grad = |xx: &[f64], uu: &[f64]| -> Vec<f64> {
        let (fx, fu) = model.jacobian(t, xx, uu);
        let mut g = vec![0.0; d];
        for j in 0..n {
            g[j] = (0..n).map(|i| nu[i] * fx[(i, j)]).sum();
        }
        for j in 0..m {
            g[n + j] = (0..n).map(|i| nu[i] * fu[(i, j)]).sum();
        }
        g
    };
    let mut hess = DMatrix::zeros(d, d);
    let mut xx = x.to_vec();
    let mut uu = u.to_vec();
    for j in 0..d {
        let base = if j < n { x[j] } else { u[j - n] };
        let h = 1e-5 * (1.0 + base.abs());
        let set = |xx: &mut Vec<f64>, uu: &mut Vec<f64>, v: f64| {
            if j < n {
                xx[j] = v
            } else {
                uu[j - n] = v
            }
        };
        set(&mut xx, &mut uu, base + h);
        let gp = grad(&xx, &uu);
        set(&mut xx, &mut uu, base - h);
        let gm = grad(&xx, &uu);
        set(&mut xx, &mut uu, base);
        for i in 0..d {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    (&hess + hess.transpose()) * 0.5
}

/// Result of [`solve_nlp`].
#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub trajectory: PiecewiseTrajectory,
    pub z: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub constraint_violation: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Solves a transcription. A warm start on the same mesh reuses its variables
/// and multipliers; otherwise its trajectory is sampled at the new nodes.
///
/// A warm start that fails to converge is retried once from the cold guess;
/// the reported iteration count covers both attempts.
pub fn solve_nlp(nlp: &Transcription, warm: Option<&NlpSolution>, s: &SolverSettings) -> Result<NlpSolution> {
    if nlp.lower.iter().zip(&nlp.upper).any(|(l, u)| l > u) {
        return Err(invalid("NLP bounds are inconsistent"));
    }
    let (z0, lam) = match warm {
        Some(w) if w.z.len() == nlp.nvar && w.trajectory.mesh() == &nlp.mesh && w.trajectory.scheme() == nlp.scheme => {
            (w.z.clone(), Some(w.multipliers.as_slice()))
        }
        Some(w) => (nlp.initial_guess(Some(&w.trajectory)), None),
        None => (nlp.initial_guess(None), None),
    };
    let mut r = solve_al(nlp, &z0, lam, s);
    if warm.is_some() && r.status != SolveStatus::Optimal {
        let spent = r.iterations;
        r = solve_al(nlp, &nlp.initial_guess(None), None, s);
        r.iterations += spent;
    }
    Ok(NlpSolution {
        trajectory: nlp.trajectory(&r.z)?,
        z: r.z,
        multipliers: r.multipliers,
        objective: r.objective,
        kkt_residual: r.kkt_residual,
        constraint_violation: r.constraint_violation,
        iterations: r.iterations,
        status: r.status,
    })
}
