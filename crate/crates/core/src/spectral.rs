//! Radial finite-element discretization of the form `a_μ` per angular sector
//! and the resulting generalized eigenproblems.
//!
//! For a sector of angular momentum `ℓ` the radial form is
//!
//! ```text
//! ∫ u' v' r^(N-1) dr + ∫ [V r^(N-1)/a + ℓ(ℓ+N-2) r^(N-3)] u v dr
//! ```
//!
//! against the mass `∫ u v r^(N-1)/a dr`. Both are assembled with continuous
//! piecewise-linear elements, a natural condition at `r = 0` and a homogeneous
//! Dirichlet condition at `r_max`. Eigenvalues of `A` are `λ = -μ` where
//! `K u = μ M u`; radial eigenfunctions are normalized per unit solid angle.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::OperatorParams;
use crate::quad::gauss_legendre;
use crate::tridiag::{Pencil, SymTridiag};

/// Minimum number of elements in a radial grid.
pub const MIN_ELEMENTS: usize = 64;

/// `Φ(r_max)` targeted by automatic truncation.
pub const AUTO_ENVELOPE_LEVEL: f64 = 1e-16;

/// Gauss points per element for the non-gradient integrals.
const ELEMENT_GAUSS_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RMax {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Grading {
    Uniform,
    /// Element widths grow by the given ratio from the origin outwards.
    Geometric(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    grading: Grading,
}

impl RadialGrid {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn r_max(&self) -> f64 {
        *self.nodes.last().expect("grid has nodes")
    }

    pub fn elements(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Number of free nodes (all but the Dirichlet node at `r_max`).
    pub fn unknowns(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn grading(&self) -> Grading {
        self.grading
    }

    /// Index of the node closest to `r`.
    pub fn nearest_node(&self, r: f64) -> usize {
        let idx = self.nodes.partition_point(|&x| x < r);
        if idx == 0 {
            0
        } else if idx >= self.nodes.len() {
            self.nodes.len() - 1
        } else if (self.nodes[idx] - r).abs() < (r - self.nodes[idx - 1]).abs() {
            idx
        } else {
            idx - 1
        }
    }

    /// Linear interpolation of nodal values `u` (full length, including the
    /// boundary node) at `r`.
    pub fn interpolate(&self, u: &[f64], r: f64) -> f64 {
        let n = self.nodes.len();
        if r <= self.nodes[0] {
            return u[0];
        }
        if r >= self.nodes[n - 1] {
            return u[n - 1];
        }
        let i = self.nodes.partition_point(|&x| x <= r) - 1;
        let (r0, r1) = (self.nodes[i], self.nodes[i + 1]);
        let w = (r - r0) / (r1 - r0);
        (1.0 - w) * u[i] + w * u[i + 1]
    }
}

/// Radius where `Φ(r) = 1e-16`, found by bisection on `log Φ`.
pub fn auto_r_max(params: &OperatorParams) -> Result<f64> {
    let env = params.envelope_fn();
    if env.phase_exp <= 0.0 {
        return Err(Error::InvalidParams(
            "automatic r_max needs a decaying envelope (beta > alpha - 2)".into(),
        ));
    }
    let target = AUTO_ENVELOPE_LEVEL.ln();
    let mut lo = 1.0;
    let mut hi = 2.0;
    while env.log_eval(hi) > target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e8 {
            return Err(Error::Convergence {
                stage: "automatic r_max",
                detail: "envelope does not reach 1e-16 below r = 1e8".into(),
            });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if env.log_eval(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn build_grid(params: &OperatorParams, r_max: RMax, n: usize, grading: Grading) -> Result<RadialGrid> {
    let r_max = match r_max {
        RMax::Auto => auto_r_max(params)?,
        RMax::Fixed(r) => r,
    };
    if !(r_max > 1.0) || !r_max.is_finite() {
        return Err(Error::InvalidInput(format!("r_max must exceed 1 (got {r_max})")));
    }
    if n < MIN_ELEMENTS {
        return Err(Error::InvalidInput(format!(
            "grid needs at least {MIN_ELEMENTS} elements (got {n})"
        )));
    }
    let nodes = match grading {
        Grading::Uniform => uniform_nodes(r_max, n),
        Grading::Geometric(q) => {
            if !(q > 0.0) || !q.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "geometric grading ratio must be positive (got {q})"
                )));
            }
            if q == 1.0 {
                uniform_nodes(r_max, n)
            } else {
                let total = (q.powi(n as i32) - 1.0) / (q - 1.0);
                let h0 = r_max / total;
                let mut nodes = Vec::with_capacity(n + 1);
                let mut r = 0.0;
                nodes.push(0.0);
                for i in 0..n {
                    r += h0 * q.powi(i as i32);
                    nodes.push(r);
                }
                nodes[n] = r_max;
                nodes
            }
        }
    };
    if nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput(
            "grid nodes are not strictly increasing (grading too extreme)".into(),
        ));
    }
    Ok(RadialGrid { nodes, grading })
}

fn uniform_nodes(r_max: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| r_max * i as f64 / n as f64).collect()
}

/// Stiffness and mass of one angular sector on a radial grid.
#[derive(Debug, Clone)]
pub struct SectorOperator {
    pub ell: usize,
    pub grid: RadialGrid,
    pub pencil: Pencil,
}

impl SectorOperator {
    pub fn stiffness(&self) -> &SymTridiag {
        &self.pencil.k
    }

    pub fn mass(&self) -> &SymTridiag {
        &self.pencil.m
    }

    /// Rayleigh quotient `a_μ(u,u)/‖u‖²_μ` of a vector over the free nodes.
    pub fn rayleigh(&self, u: &[f64]) -> f64 {
        self.pencil.k.inner(u, u) / self.pencil.m.inner(u, u)
    }
}

pub fn build_sector_operator(params: &OperatorParams, grid: &RadialGrid, ell: usize) -> SectorOperator {
    let nodes = grid.nodes();
    let n_el = grid.elements();
    let dim = params.dim() as i32;
    let centrifugal = (ell * (ell + params.dim() - 2)) as f64;
    let (gx, gw) = gauss_legendre(ELEMENT_GAUSS_POINTS);
    // Assemble on all nodes, then drop the Dirichlet node.
    let mut kd = vec![0.0; n_el + 1];
    let mut ko = vec![0.0; n_el];
    let mut md = vec![0.0; n_el + 1];
    let mut mo = vec![0.0; n_el];
    for e in 0..n_el {
        let (r0, r1) = (nodes[e], nodes[e + 1]);
        let h = r1 - r0;
        let grad = (r1.powi(dim) - r0.powi(dim)) / (dim as f64 * h * h);
        let (mut m00, mut m01, mut m11) = (0.0, 0.0, 0.0);
        let (mut p00, mut p01, mut p11) = (0.0, 0.0, 0.0);
        for (x, w) in gx.iter().zip(&gw) {
            let s = r0 + 0.5 * (x + 1.0) * h;
            let w = 0.5 * w * h;
            let b0 = (r1 - s) / h;
            let b1 = (s - r0) / h;
            let rho = params.mu_density(s);
            let pot = params.potential(s) * rho + centrifugal * s.powi(dim - 3);
            m00 += w * rho * b0 * b0;
            m01 += w * rho * b0 * b1;
            m11 += w * rho * b1 * b1;
            p00 += w * pot * b0 * b0;
            p01 += w * pot * b0 * b1;
            p11 += w * pot * b1 * b1;
        }
        md[e] += m00;
        md[e + 1] += m11;
        mo[e] += m01;
        kd[e] += grad + p00;
        kd[e + 1] += grad + p11;
        ko[e] += p01 - grad;
    }
    kd.pop();
    md.pop();
    ko.pop();
    mo.pop();
    let k = SymTridiag { diag: kd, off: ko };
    let m = SymTridiag { diag: md, off: mo };
    SectorOperator {
        ell,
        grid: grid.clone(),
        pencil: Pencil { k, m },
    }
}

/// One eigenpair of a sector, with the eigenfunction sampled on every grid
/// node (the Dirichlet node carries 0) and unit discrete `L²_μ` norm per unit
/// solid angle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenPair {
    pub ell: usize,
    pub j: usize,
    pub lambda: f64,
    pub psi: Vec<f64>,
}

impl EigenPair {
    /// Free-node part of the eigenvector.
    pub fn free(&self) -> &[f64] {
        &self.psi[..self.psi.len() - 1]
    }
}

/// The `m` algebraically largest eigenvalues of `A` in the sector, descending.
pub fn solve_eigenpairs(op: &SectorOperator, m: usize) -> Result<Vec<EigenPair>> {
    if m == 0 || m > op.pencil.len() {
        return Err(Error::InvalidInput(format!(
            "requested {m} eigenpairs; sector has {} unknowns",
            op.pencil.len()
        )));
    }
    let pairs = op.pencil.smallest_eigenpairs(m)?;
    Ok(pairs
        .into_iter()
        .enumerate()
        .map(|(j, (mu, mut v))| {
            v.push(0.0);
            EigenPair {
                ell: op.ell,
                j,
                lambda: -mu,
                psi: v,
            }
        })
        .collect())
}

/// All eigenpairs with `λ >= threshold`, capped at `max_modes`. Returns the
/// pairs and whether the threshold was reached before the cap.
pub fn eigenpairs_above(op: &SectorOperator, threshold: f64, max_modes: usize) -> Result<(Vec<EigenPair>, bool)> {
    let available = op.pencil.count_below(-threshold).min(op.pencil.len());
    let reached = available < max_modes.min(op.pencil.len()) || available == 0;
    let m = available.clamp(1, max_modes.min(op.pencil.len()));
    Ok((solve_eigenpairs(op, m)?, reached))
}

/// Maximum entry of `|G - I|` for the `M`-Gram matrix of the pairs.
pub fn orthonormality_residual(op: &SectorOperator, pairs: &[EigenPair]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in pairs.iter().enumerate() {
        for (j, b) in pairs.iter().enumerate() {
            let g = op.pencil.m.inner(a.free(), b.free());
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    worst
}

/// `‖(-K)ψ - λ M ψ‖ / ‖M ψ‖` in the Euclidean norm.
pub fn eigen_residual(op: &SectorOperator, pair: &EigenPair) -> f64 {
    let kv = op.pencil.k.matvec(pair.free());
    let mv = op.pencil.m.matvec(pair.free());
    let num: f64 = kv
        .iter()
        .zip(&mv)
        .map(|(k, m)| (-k - pair.lambda * m).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = mv.iter().map(|m| m * m).sum::<f64>().sqrt();
    num / den
}

/// Number of strict sign changes in the samples, ignoring entries below
/// `1e-10 * max|u|` in magnitude.
pub fn sign_changes(u: &[f64]) -> usize {
    let peak = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut last = 0.0;
    let mut changes = 0;
    for &v in u {
        if v.abs() <= 1e-10 * peak {
            continue;
        }
        if last != 0.0 && (v > 0.0) != (last > 0.0) {
            changes += 1;
        }
        last = v;
    }
    changes
}

#[derive(Debug, Clone, Copy)]
pub struct LadderOptions {
    /// Stop when successive extrapolated `λ₀` differ by less than this.
    pub tol: f64,
    /// Elements on the coarsest level.
    pub n0: usize,
    pub r_max: RMax,
    pub max_depth: usize,
    /// Number of leading eigenvalues tracked per level.
    pub modes: usize,
    /// Coarse elements appended to the domain at each level.
    pub growth_elements: usize,
}

impl Default for LadderOptions {
    fn default() -> Self {
        LadderOptions {
            tol: 1e-8,
            n0: 128,
            r_max: RMax::Auto,
            max_depth: 8,
            modes: 2,
            growth_elements: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderLevel {
    pub elements: usize,
    pub r_max: f64,
    pub h: f64,
    pub lambdas: Vec<f64>,
    /// Richardson values `(4 λ_fine - λ_coarse)/3` against the previous level.
    pub extrapolated: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroundState {
    /// Richardson-extrapolated leading eigenvalue.
    pub lambda0: f64,
    /// Extrapolated values of every tracked eigenvalue.
    pub lambdas: Vec<f64>,
    /// Radial ground state with unit `L²_μ` norm per unit solid angle,
    /// Richardson-extrapolated onto the grid of the second-finest level.
    pub psi: Vec<f64>,
    pub grid: RadialGrid,
    pub ladder: Vec<LadderLevel>,
    /// Raw `λ₀` increases along the ladder (within `1e-12`).
    pub monotone: bool,
}

impl GroundState {
    /// Full-space ground state `ψ(x) = ψ_rad(|x|)/sqrt(ω_{N-1})` at radius `r`.
    pub fn full_space(&self, params: &OperatorParams, r: f64) -> f64 {
        self.grid.interpolate(&self.psi, r) / params.sphere_area().sqrt()
    }
}

/// Leading radial eigenpair on a ladder of nested uniform grids.
///
/// Level `k` has spacing `h₀/2^k` and radius `r₀ + k g h₀`, so every level
/// refines the previous one. P1 eigenvalues converge at `O(h²)` from below,
/// and the ladder reports the Richardson combination of adjacent levels.
pub fn ground_state(params: &OperatorParams, opts: &LadderOptions) -> Result<GroundState> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!("tol must be positive (got {})", opts.tol)));
    }
    if opts.max_depth < 2 {
        return Err(Error::InvalidInput("ladder needs at least two levels".into()));
    }
    let r0 = match opts.r_max {
        RMax::Auto => auto_r_max(params)?,
        RMax::Fixed(r) => r,
    };
    let h0 = r0 / opts.n0 as f64;
    let mut ladder: Vec<LadderLevel> = Vec::new();
    let mut levels: Vec<(RadialGrid, Vec<f64>)> = Vec::new();
    let mut converged = false;
    for depth in 0..opts.max_depth {
        let scale = 1usize << depth;
        let elements = (opts.n0 + depth * opts.growth_elements) * scale;
        let r_max = h0 * (opts.n0 + depth * opts.growth_elements) as f64;
        let grid = build_grid(params, RMax::Fixed(r_max), elements, Grading::Uniform)?;
        let op = build_sector_operator(params, &grid, 0);
        let pairs = solve_eigenpairs(&op, opts.modes.max(1))?;
        let lambdas: Vec<f64> = pairs.iter().map(|p| p.lambda).collect();
        let extrapolated = ladder.last().map(|prev| {
            lambdas
                .iter()
                .zip(&prev.lambdas)
                .map(|(f, c)| (4.0 * f - c) / 3.0)
                .collect::<Vec<f64>>()
        });
        let done = match (&extrapolated, ladder.last().and_then(|l| l.extrapolated.as_ref())) {
            (Some(now), Some(before)) => (now[0] - before[0]).abs() < opts.tol,
            _ => false,
        };
        ladder.push(LadderLevel {
            elements,
            r_max,
            h: r_max / elements as f64,
            lambdas,
            extrapolated,
        });
        levels.push((grid, pairs.into_iter().next().expect("one pair").psi));
        if done {
            converged = true;
            break;
        }
    }
    let monotone = ladder
        .windows(2)
        .all(|w| w[1].lambdas[0] >= w[0].lambdas[0] - 1e-12);
    if !converged {
        let trace: Vec<String> = ladder
            .iter()
            .map(|l| {
                format!(
                    "n={} λ₀={:.12} extrap={:?}",
                    l.elements,
                    l.lambdas[0],
                    l.extrapolated.as_ref().map(|e| e[0])
                )
            })
            .collect();
        return Err(Error::Convergence {
            stage: "ground-state ladder",
            detail: format!(
                "no convergence to {} within {} levels: {}",
                opts.tol,
                opts.max_depth,
                trace.join("; ")
            ),
        });
    }
    let (fine_grid, fine_psi) = levels.pop().expect("ladder has two levels");
    let (coarse_grid, coarse_psi) = levels.pop().expect("ladder has two levels");
    let (grid, psi) = match extrapolate_nested(&coarse_psi, &fine_psi) {
        Some(psi) => (coarse_grid, psi),
        None => (fine_grid, fine_psi),
    };
    let lambdas = ladder
        .last()
        .and_then(|l| l.extrapolated.clone())
        .expect("converged ladder has an extrapolation");
    Ok(GroundState {
        lambda0: lambdas[0],
        lambdas,
        psi,
        grid,
        ladder,
        monotone,
    })
}

/// Richardson combination `(4 ψ_fine - ψ_coarse)/3` on the coarse nodes,
/// where coarse node `i` coincides with fine node `2i`. Returns `None` if the
/// combination is not strictly positive on the free nodes.
fn extrapolate_nested(coarse: &[f64], fine: &[f64]) -> Option<Vec<f64>> {
    let n = coarse.len();
    let mut out: Vec<f64> = (0..n - 1)
        .map(|i| (4.0 * fine[2 * i] - coarse[i]) / 3.0)
        .collect();
    out.push(0.0);
    if out[..n - 1].iter().all(|v| *v > 0.0) {
        Some(out)
    } else {
        None
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RadialGroundReport {
    pub lambda0_radial: f64,
    pub lambda0_first_harmonic: f64,
    /// `λ₀(ℓ=0) - λ₀(ℓ=1)`
    pub gap: f64,
    pub passed: bool,
}

/// Checks that the global ground state lies in the radial sector.
pub fn verify_radial_ground(params: &OperatorParams, grid: &RadialGrid) -> Result<RadialGroundReport> {
    let tops: Vec<f64> = [0usize, 1]
        .par_iter()
        .map(|&ell| {
            let op = build_sector_operator(params, grid, ell);
            solve_eigenpairs(&op, 1).map(|p| p[0].lambda)
        })
        .collect::<Result<Vec<f64>>>()?;
    let gap = tops[0] - tops[1];
    Ok(RadialGroundReport {
        lambda0_radial: tops[0],
        lambda0_first_harmonic: tops[1],
        gap,
        passed: gap > 0.0,
    })
}

/// Eigenpairs of several sectors on a common grid.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumResult {
    pub grid: RadialGrid,
    pub sectors: Vec<Vec<EigenPair>>,
    /// Eigenvalues are Richardson values against a grid with halved spacing.
    pub extrapolated: bool,
}

pub fn compute_spectrum(params: &OperatorParams, grid: &RadialGrid, ell_max: usize, modes: usize) -> Result<SpectrumResult> {
    let sectors = (0..=ell_max)
        .into_par_iter()
        .map(|ell| solve_eigenpairs(&build_sector_operator(params, grid, ell), modes))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectrumResult {
        grid: grid.clone(),
        sectors,
        extrapolated: false,
    })
}

/// As [`compute_spectrum`], with eigenvalues replaced by the Richardson
/// combination `(4 λ_fine - λ)/3` against the uniform grid with twice the
/// elements. Eigenfunctions stay on `grid`. Geometric grids are returned
/// without extrapolation.
pub fn compute_spectrum_extrapolated(
    params: &OperatorParams,
    grid: &RadialGrid,
    ell_max: usize,
    modes: usize,
) -> Result<SpectrumResult> {
    let mut coarse = compute_spectrum(params, grid, ell_max, modes)?;
    if grid.grading() != Grading::Uniform {
        return Ok(coarse);
    }
    let fine_grid = build_grid(params, RMax::Fixed(grid.r_max()), 2 * grid.elements(), Grading::Uniform)?;
    let fine = compute_spectrum(params, &fine_grid, ell_max, modes)?;
    for (cs, fs) in coarse.sectors.iter_mut().zip(&fine.sectors) {
        for (c, f) in cs.iter_mut().zip(fs) {
            c.lambda = (4.0 * f.lambda - c.lambda) / 3.0;
        }
    }
    coarse.extrapolated = true;
    Ok(coarse)
}

impl SpectrumResult {
    /// CSV with columns `ell,j,lambda_j`.
    pub fn eigenvalue_csv(&self) -> String {
        let mut s = String::from("ell,j,lambda_j\n");
        for sector in &self.sectors {
            for p in sector {
                let _ = writeln!(s, "{},{},{}", p.ell, p.j, p.lambda);
            }
        }
        s
    }

    /// CSV of grid samples `r,psi_0,psi_1,...` for one sector.
    pub fn eigenfunction_csv(&self, ell: usize) -> String {
        let pairs = &self.sectors[ell];
        let mut s = String::from("r");
        for p in pairs {
            let _ = write!(s, ",psi_{}", p.j);
        }
        s.push('\n');
        for (i, r) in self.grid.nodes().iter().enumerate() {
            let _ = write!(s, "{r}");
            for p in pairs {
                let _ = write!(s, ",{}", p.psi[i]);
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("spectrum.csv"), self.eigenvalue_csv())?;
        std::fs::write(dir.join("eigenfunctions.csv"), self.eigenfunction_csv(0))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn oscillator() -> OperatorParams {
        OperatorParams::new(3, 0.0, 2.0, true).unwrap()
    }

    fn reference() -> OperatorParams {
        OperatorParams::new(3, 2.0, 4.0, false).unwrap()
    }

    #[test]
    fn auto_radius_solves_envelope_level() {
        let p = reference();
        let r = auto_r_max(&p).unwrap();
        assert_relative_eq!(p.envelope(r), 1e-16, max_relative = 1e-9);
        assert!(r > 8.0 && r < 8.7);
    }

    #[test]
    fn uniform_spacing() {
        let g = build_grid(&reference(), RMax::Fixed(10.0), 100, Grading::Uniform).unwrap();
        assert_relative_eq!(g.nodes()[1] - g.nodes()[0], 0.1, epsilon = 1e-15);
        assert_eq!(g.r_max(), 10.0);
    }

    #[test]
    fn geometric_ratio_one_is_uniform() {
        let p = reference();
        let a = build_grid(&p, RMax::Fixed(5.0), 80, Grading::Uniform).unwrap();
        let b = build_grid(&p, RMax::Fixed(5.0), 80, Grading::Geometric(1.0)).unwrap();
        assert_eq!(a.nodes(), b.nodes());
        let c = build_grid(&p, RMax::Fixed(5.0), 80, Grading::Geometric(1.02)).unwrap();
        assert_relative_eq!(c.r_max(), 5.0);
        assert!(c.nodes()[1] < a.nodes()[1]);
    }

    #[test]
    fn grid_rejections() {
        let p = reference();
        assert!(build_grid(&p, RMax::Fixed(-1.0), 100, Grading::Uniform).is_err());
        assert!(build_grid(&p, RMax::Fixed(10.0), 63, Grading::Uniform).is_err());
    }

    #[test]
    fn mass_row_sums_match_density_integral() {
        let p = reference();
        let g = build_grid(&p, RMax::Fixed(4.0), 200, Grading::Uniform).unwrap();
        let op = build_sector_operator(&p, &g, 0);
        let ones = vec![1.0; op.pencil.len()];
        let total: f64 = op.mass().matvec(&ones).iter().sum();
        // ∫ρ(1 - φ_last)² with φ_last the hat function of the Dirichlet node.
        let h = 0.02;
        let exact = 4.0 - 4f64.atan() - 16.0 / 17.0 * 2.0 * h / 3.0;
        assert!((total - exact).abs() < 1e-4, "{total} vs {exact}");
    }

    #[test]
    fn oscillator_levels() {
        let p = oscillator();
        let g = build_grid(&p, RMax::Fixed(8.0), 1600, Grading::Uniform).unwrap();
        let op = build_sector_operator(&p, &g, 0);
        let pairs = solve_eigenpairs(&op, 3).unwrap();
        assert_relative_eq!(pairs[0].lambda, -3.0, epsilon = 1e-4);
        assert_relative_eq!(pairs[1].lambda, -7.0, epsilon = 1e-3);
        assert!(orthonormality_residual(&op, &pairs) < 1e-10);
        for (j, pair) in pairs.iter().enumerate() {
            assert!(eigen_residual(&op, pair) < 1e-8);
            assert_eq!(sign_changes(&pair.psi), j);
        }
        let op1 = build_sector_operator(&p, &g, 1);
        let top1 = solve_eigenpairs(&op1, 1).unwrap()[0].lambda;
        assert_relative_eq!(top1, -5.0, epsilon = 1e-3);
    }

    #[test]
    fn centrifugal_term_raises_rayleigh_quotients() {
        let p = reference();
        let g = build_grid(&p, RMax::Fixed(6.0), 128, Grading::Uniform).unwrap();
        let u: Vec<f64> = g.nodes()[..128].iter().map(|r| (-r * r).exp()).collect();
        let q: Vec<f64> = (0..4).map(|l| build_sector_operator(&p, &g, l).rayleigh(&u)).collect();
        assert!(q.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn ladder_is_monotone_and_converges() {
        let p = reference();
        let gs = ground_state(&p, &LadderOptions::default()).unwrap();
        assert!(gs.monotone);
        assert!(gs.lambda0 < 0.0);
        assert!(gs.psi[..gs.psi.len() - 1].iter().all(|v| *v > 0.0));
    }

    #[test]
    fn radial_sector_hosts_ground_state() {
        let p = oscillator();
        let g = build_grid(&p, RMax::Fixed(8.0), 800, Grading::Uniform).unwrap();
        let r = verify_radial_ground(&p, &g).unwrap();
        assert!(r.passed);
        assert_relative_eq!(r.gap, 2.0, epsilon = 1e-3);
    }

    #[test]
    fn csv_layout() {
        let p = oscillator();
        let g = build_grid(&p, RMax::Fixed(8.0), 64, Grading::Uniform).unwrap();
        let s = compute_spectrum(&p, &g, 1, 2).unwrap();
        let csv = s.eigenvalue_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "ell,j,lambda_j");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0,0,-"));
        let ef = s.eigenfunction_csv(0);
        assert_eq!(ef.lines().count(), 66);
    }

    #[test]
    fn interpolation_and_nearest_node() {
        let g = build_grid(&reference(), RMax::Fixed(6.4), 64, Grading::Uniform).unwrap();
        let u: Vec<f64> = g.nodes().iter().map(|r| 2.0 * r + 1.0).collect();
        assert_relative_eq!(g.interpolate(&u, 3.33), 7.66, epsilon = 1e-12);
        assert_eq!(g.nearest_node(0.26), 3);
    }
}
