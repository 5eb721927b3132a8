//! Heat kernels of the semigroup generated by `A`.
//!
//! Per sector, `k_ℓ(t, r, r') = Σ_j e^{λ_j t} ψ_j(r) ψ_j(r')` over the
//! `M`-orthonormal discrete eigenpairs. The full kernel with respect to `μ` is
//! `k_μ(t, x, y) = Σ_ℓ Z_ℓ(x̂·ŷ) k_ℓ(t, |x|, |y|)`, and the Lebesgue kernel is
//! `k(t, x, y) = k_μ(t, x, y) / a(|y|)`.
//!
//! An implicit time stepper on the same discrete sector operator gives an
//! independent construction of kernel columns, and is the only backend used
//! below `MIN_EXPANSION_T`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::OperatorParams;
use crate::spectral::{build_sector_operator, solve_eigenpairs, RadialGrid, SectorOperator};
use crate::tridiag::SymTridiag;
use crate::zonal::zonal_values;

/// Modes are kept while `e^{(λ_j - λ_0) t}` is at least this.
pub const SPECTRAL_CUTOFF: f64 = 1e-12;

/// Smallest time served by the eigenexpansion.
pub const MIN_EXPANSION_T: f64 = 0.05;

/// Eigen-data of one sector prepared for kernel evaluation.
#[derive(Debug, Clone)]
pub struct SectorExpansion {
    pub ell: usize,
    pub lambdas: Vec<f64>,
    /// Eigenvectors on every grid node (the Dirichlet node carries 0).
    pub vectors: Vec<Vec<f64>>,
    /// Whether every discrete mode of the sector is present.
    pub complete: bool,
}

/// Mode count and the bound on the first omitted term at a given time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Truncation {
    pub modes: usize,
    /// `e^{λ_m t} max|ψ_m|²` for the first omitted mode `m`, 0 when none is omitted.
    pub bound: f64,
}

impl SectorExpansion {
    /// Enough modes for every `t >= t_min`, plus one extra mode that bounds
    /// the truncation error. At most `max_modes` are computed.
    pub fn compute(op: &SectorOperator, t_min: f64, max_modes: usize) -> Result<Self> {
        let n = op.pencil.len();
        let mu0 = op.pencil.eigenvalue(0, 0.0)?;
        let mu_cut = mu0 + (1.0 / SPECTRAL_CUTOFF).ln() / t_min;
        let wanted = (op.pencil.count_below(mu_cut) + 1).min(n).min(max_modes.max(1));
        let pairs = solve_eigenpairs(op, wanted)?;
        Ok(SectorExpansion {
            ell: op.ell,
            lambdas: pairs.iter().map(|p| p.lambda).collect(),
            vectors: pairs.into_iter().map(|p| p.psi).collect(),
            complete: wanted == n,
        })
    }

    pub fn top(&self) -> f64 {
        self.lambdas[0]
    }

    /// Smallest `t` the computed modes can serve at the spectral cutoff.
    pub fn smallest_usable_t(&self) -> f64 {
        let floor = MIN_EXPANSION_T;
        if self.complete || self.lambdas.len() < 2 {
            return floor;
        }
        let spread = self.top() - self.lambdas[self.lambdas.len() - 1];
        if spread <= 0.0 {
            return f64::INFINITY;
        }
        floor.max((1.0 / SPECTRAL_CUTOFF).ln() / spread)
    }

    pub fn truncation(&self, t: f64) -> Result<Truncation> {
        if !(t > 0.0) {
            return Err(Error::InvalidInput(format!("kernel time must be positive (got {t})")));
        }
        let usable = self.smallest_usable_t();
        if t < usable {
            return Err(Error::InsufficientResolution {
                t,
                smallest_usable_t: usable,
            });
        }
        let top = self.top();
        let modes = self
            .lambdas
            .iter()
            .take_while(|l| ((*l - top) * t).exp() >= SPECTRAL_CUTOFF)
            .count();
        let bound = if modes < self.lambdas.len() {
            let peak = self.vectors[modes].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            (self.lambdas[modes] * t).exp() * peak * peak
        } else {
            0.0
        };
        Ok(Truncation { modes, bound })
    }

    /// `k_ℓ(t, r_i, r_j)` with `m` modes.
    fn value_with(&self, t: f64, m: usize, i: usize, j: usize) -> f64 {
        (0..m)
            .map(|k| (self.lambdas[k] * t).exp() * self.vectors[k][i] * self.vectors[k][j])
            .sum()
    }

    pub fn value(&self, t: f64, i: usize, j: usize) -> Result<f64> {
        let tr = self.truncation(t)?;
        Ok(self.value_with(t, tr.modes, i, j))
    }

    /// Column `k_ℓ(t, ·, r_j)` on every node.
    pub fn column(&self, t: f64, j: usize) -> Result<Vec<f64>> {
        let tr = self.truncation(t)?;
        let n = self.vectors[0].len();
        let mut out = vec![0.0; n];
        for k in 0..tr.modes {
            let w = (self.lambdas[k] * t).exp() * self.vectors[k][j];
            for (o, v) in out.iter_mut().zip(&self.vectors[k]) {
                *o += w * v;
            }
        }
        Ok(out)
    }

    /// `k_ℓ(t) f` for a nodal vector `f` given as `M f` on the free nodes.
    fn apply_weighted(&self, t: f64, m: usize, mf: &[f64]) -> Vec<f64> {
        let n = self.vectors[0].len();
        let mut out = vec![0.0; n];
        for k in 0..m {
            let c: f64 = self.vectors[k][..n - 1].iter().zip(mf).map(|(a, b)| a * b).sum();
            let w = (self.lambdas[k] * t).exp() * c;
            for (o, v) in out.iter_mut().zip(&self.vectors[k]) {
                *o += w * v;
            }
        }
        out
    }
}

/// Sector kernel matrix on a node subset.
#[derive(Debug, Clone, Serialize)]
pub struct SectorKernel {
    pub ell: usize,
    pub t: f64,
    pub nodes: Vec<usize>,
    pub values: Vec<Vec<f64>>,
    pub truncation: Truncation,
}

pub fn sector_kernel(exp: &SectorExpansion, t: f64, nodes: &[usize]) -> Result<SectorKernel> {
    let tr = exp.truncation(t)?;
    let values = nodes
        .iter()
        .map(|&i| nodes.iter().map(|&j| exp.value_with(t, tr.modes, i, j)).collect())
        .collect();
    Ok(SectorKernel {
        ell: exp.ell,
        t,
        nodes: nodes.to_vec(),
        values,
        truncation: tr,
    })
}

/// A reconstructed kernel value and its angular truncation estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelValue {
    pub value: f64,
    pub angular_estimate: f64,
}

/// Eigen-data for sectors `0..=ell_max` on a common grid.
#[derive(Debug, Clone)]
pub struct KernelModel {
    pub params: OperatorParams,
    pub grid: RadialGrid,
    pub sectors: Vec<SectorExpansion>,
    radial_mass: SymTridiag,
}

impl KernelModel {
    pub fn new(params: &OperatorParams, grid: &RadialGrid, ell_max: usize, t_min: f64, max_modes: usize) -> Result<Self> {
        if !(t_min > 0.0) {
            return Err(Error::InvalidInput(format!("t_min must be positive (got {t_min})")));
        }
        let sectors = (0..=ell_max)
            .into_par_iter()
            .map(|ell| SectorExpansion::compute(&build_sector_operator(params, grid, ell), t_min, max_modes))
            .collect::<Result<Vec<_>>>()?;
        let radial_mass = build_sector_operator(params, grid, 0).pencil.m;
        Ok(KernelModel {
            params: params.clone(),
            grid: grid.clone(),
            sectors,
            radial_mass,
        })
    }

    pub fn ell_max(&self) -> usize {
        self.sectors.len() - 1
    }

    /// Leading eigenvalue of the radial sector.
    pub fn lambda0(&self) -> f64 {
        self.sectors[0].top()
    }

    /// Radial ground state on the grid nodes.
    pub fn psi0(&self) -> &[f64] {
        &self.sectors[0].vectors[0]
    }

    pub fn smallest_usable_t(&self) -> f64 {
        self.sectors
            .iter()
            .map(|s| s.smallest_usable_t())
            .fold(MIN_EXPANSION_T, f64::max)
    }

    /// `k_μ(t, x, y)` for `|x| = r_i`, `|y| = r_j`, `x̂·ŷ = cos`.
    ///
    /// The angular estimate extrapolates the last two sector magnitudes
    /// `Z_ℓ(1) sqrt(k_ℓ(r_i, r_i) k_ℓ(r_j, r_j))` geometrically. It is
    /// compared against `angular_tol * max(|value|, 1e-10 Σ magnitudes)`, the
    /// floor covering values that cancel far below the on-diagonal scale.
    pub fn k_mu(&self, t: f64, i: usize, j: usize, cos: f64, angular_tol: f64) -> Result<KernelValue> {
        let dim = self.params.dim();
        let z = zonal_values(dim, self.ell_max(), cos);
        let z1 = zonal_values(dim, self.ell_max(), 1.0);
        let mut value = 0.0;
        let mut magnitudes = Vec::with_capacity(self.sectors.len());
        for (ell, sector) in self.sectors.iter().enumerate() {
            let tr = sector.truncation(t)?;
            let kij = sector.value_with(t, tr.modes, i, j);
            value += z[ell] * kij;
            let kii = sector.value_with(t, tr.modes, i, i);
            let kjj = sector.value_with(t, tr.modes, j, j);
            magnitudes.push(z1[ell] * (kii.max(0.0) * kjj.max(0.0)).sqrt());
        }
        let angular_estimate = tail_estimate(&magnitudes);
        let scale = value.abs().max(1e-10 * magnitudes.iter().sum::<f64>());
        if angular_estimate > angular_tol * scale {
            return Err(Error::AngularTruncation {
                l_max: self.ell_max(),
                estimate: angular_estimate / scale,
                tolerance: angular_tol,
            });
        }
        Ok(KernelValue { value, angular_estimate })
    }

    /// Kernel on a radial × radial × cosine lattice. Radii snap to grid nodes.
    pub fn slice(&self, t: f64, radii: &[f64], cosines: &[f64], angular_tol: f64) -> Result<KernelSlice> {
        let nodes: Vec<usize> = radii.iter().map(|r| self.grid.nearest_node(*r)).collect();
        let snapped: Vec<f64> = nodes.iter().map(|&i| self.grid.nodes()[i]).collect();
        let rows = nodes
            .par_iter()
            .map(|&i| {
                let mut row = Vec::with_capacity(nodes.len() * cosines.len());
                for &j in &nodes {
                    for &c in cosines {
                        row.push(self.k_mu(t, i, j, c, angular_tol)?);
                    }
                }
                Ok(row)
            })
            .collect::<Result<Vec<Vec<KernelValue>>>>()?;
        let mut values = Vec::with_capacity(nodes.len() * nodes.len() * cosines.len());
        let mut worst_angular: f64 = 0.0;
        for row in rows {
            for kv in row {
                if kv.value != 0.0 {
                    worst_angular = worst_angular.max(kv.angular_estimate / kv.value.abs());
                }
                values.push(kv.value);
            }
        }
        let truncation: Vec<Truncation> = self
            .sectors
            .iter()
            .map(|s| s.truncation(t))
            .collect::<Result<_>>()?;
        Ok(KernelSlice {
            t,
            radii: snapped,
            cosines: cosines.to_vec(),
            k_mu: values,
            lebesgue_weights: nodes
                .iter()
                .map(|&j| self.params.diffusion(self.grid.nodes()[j]))
                .collect(),
            metadata: KernelMetadata {
                backend: "eigenexpansion".into(),
                ell_max: self.ell_max(),
                modes_per_sector: truncation.iter().map(|t| t.modes).collect(),
                spectral_truncation_bound: truncation.iter().map(|t| t.bound).fold(0.0, f64::max),
                angular_truncation_estimate: worst_angular,
                angular_tol,
                spectral_cutoff: SPECTRAL_CUTOFF,
                smallest_usable_t: self.smallest_usable_t(),
            },
        })
    }

    /// `sup_i ∫ k(t, x_i, y) dy` over the free nodes.
    pub fn mass(&self, t: f64) -> Result<f64> {
        let sector = &self.sectors[0];
        let tr = sector.truncation(t)?;
        let ones = vec![1.0; self.radial_mass.len()];
        let mw = self.radial_mass.matvec(&ones);
        let u = sector.apply_weighted(t, tr.modes, &mw);
        Ok(u[..u.len() - 1].iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)))
    }

    /// `max |K(t+s) - K(t) M K(s)| / max |K(t+s)|` over the given columns
    /// of the radial sector.
    pub fn chapman_kolmogorov(&self, t: f64, s: f64, columns: &[usize]) -> Result<f64> {
        let sector = &self.sectors[0];
        let tr_t = sector.truncation(t)?;
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for &j in columns {
            let ks = sector.column(s, j)?;
            let mks = self.radial_mass.matvec(&ks[..ks.len() - 1]);
            let composed = sector.apply_weighted(t, tr_t.modes, &mks);
            let direct = sector.column(t + s, j)?;
            for (a, b) in composed.iter().zip(&direct) {
                num = num.max((a - b).abs());
                den = den.max(b.abs());
            }
        }
        Ok(num / den)
    }
}

fn tail_estimate(magnitudes: &[f64]) -> f64 {
    let n = magnitudes.len();
    let last = magnitudes[n - 1];
    if n < 2 {
        return last;
    }
    let prev = magnitudes[n - 2];
    if prev > 0.0 && last < prev {
        let q = last / prev;
        last * q / (1.0 - q)
    } else {
        last.max(prev) * n as f64
    }
}

/// `k(t, x, y) = k_μ(t, x, y) / a(|y|)`.
pub fn lebesgue_kernel(params: &OperatorParams, k_mu: f64, r_y: f64) -> f64 {
    k_mu / params.diffusion(r_y)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelMetadata {
    pub backend: String,
    pub ell_max: usize,
    pub modes_per_sector: Vec<usize>,
    pub spectral_truncation_bound: f64,
    /// Largest relative angular truncation estimate over the lattice.
    pub angular_truncation_estimate: f64,
    pub angular_tol: f64,
    pub spectral_cutoff: f64,
    pub smallest_usable_t: f64,
}

/// `k_μ(t, ·, ·)` on a radial × radial × cosine lattice, stored row-major in
/// `(r_x, r_y, cos)`.
#[derive(Debug, Clone, Serialize)]
pub struct KernelSlice {
    pub t: f64,
    pub radii: Vec<f64>,
    pub cosines: Vec<f64>,
    pub k_mu: Vec<f64>,
    /// `a(|y|)` per radius.
    pub lebesgue_weights: Vec<f64>,
    pub metadata: KernelMetadata,
}

impl KernelSlice {
    pub fn index(&self, i: usize, j: usize, c: usize) -> usize {
        (i * self.radii.len() + j) * self.cosines.len() + c
    }

    pub fn k_mu_at(&self, i: usize, j: usize, c: usize) -> f64 {
        self.k_mu[self.index(i, j, c)]
    }

    /// Lebesgue kernel values `k(t, x_i, y)` for the `y` radius `j`.
    pub fn lebesgue_at(&self, i: usize, j: usize, c: usize) -> f64 {
        self.k_mu_at(i, j, c) / self.lebesgue_weights[j]
    }

    /// `max |k_μ(i,j,c) - k_μ(j,i,c)| / max |k_μ|`.
    pub fn symmetry_residual(&self) -> f64 {
        let n = self.radii.len();
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for c in 0..self.cosines.len() {
                    num = num.max((self.k_mu_at(i, j, c) - self.k_mu_at(j, i, c)).abs());
                    den = den.max(self.k_mu_at(i, j, c).abs());
                }
            }
        }
        num / den
    }

    /// Rows `t,r_x,r_y,cos_theta,k_mu,k`.
    pub fn to_csv_rows(&self, out: &mut String) {
        for i in 0..self.radii.len() {
            for j in 0..self.radii.len() {
                for c in 0..self.cosines.len() {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{}",
                        self.t,
                        self.radii[i],
                        self.radii[j],
                        self.cosines[c],
                        self.k_mu_at(i, j, c),
                        self.lebesgue_at(i, j, c)
                    );
                }
            }
        }
    }
}

pub const KERNEL_CSV_HEADER: &str = "t,r_x,r_y,cos_theta,k_mu,k";

#[derive(Debug, Clone, Copy)]
pub struct TimestepOptions {
    /// Steps per output interval on the coarsest run.
    pub base_steps: usize,
    /// Largest step count per interval before giving up.
    pub max_steps: usize,
    /// Accept when successive extrapolated results differ by less than this
    /// (relative) at the probe nodes.
    pub rel_tol: f64,
}

impl Default for TimestepOptions {
    fn default() -> Self {
        TimestepOptions {
            base_steps: 8,
            max_steps: 4096,
            rel_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TimestepResult {
    pub times: Vec<f64>,
    /// Kernel columns `k_ℓ(t, ·, r_y)` on every node, one per output time.
    pub columns: Vec<Vec<f64>>,
    pub base_steps_used: usize,
    /// `(base steps, max relative change)` for every comparison made.
    pub trace: Vec<(usize, f64)>,
}

/// Evolve the discrete delta `M^{-1} e_y` under `u' = -M^{-1} K u` with
/// implicit Euler and two levels of Richardson extrapolation.
///
/// Each output interval is split into equal steps except the first, whose
/// steps grow quadratically from `t = 0` to damp the stiff start. Step counts
/// double until the extrapolated results at the probe nodes agree to
/// `rel_tol` between successive refinements.
pub fn timestep_oracle(
    op: &SectorOperator,
    y_node: usize,
    times: &[f64],
    probes: &[usize],
    opts: &TimestepOptions,
) -> Result<TimestepResult> {
    timestep_oracle_with_floor(op, y_node, times, probes, opts, &[])
}

/// As [`timestep_oracle`], with per-time absolute floors for the relative
/// comparison. A sector whose values are negligible next to the full-space
/// kernel is then only resolved to the accuracy that kernel needs.
pub fn timestep_oracle_with_floor(
    op: &SectorOperator,
    y_node: usize,
    times: &[f64],
    probes: &[usize],
    opts: &TimestepOptions,
    floors: &[f64],
) -> Result<TimestepResult> {
    let n = op.pencil.len();
    if y_node >= n {
        return Err(Error::InvalidInput(format!(
            "source node {y_node} is not a free node (have {n})"
        )));
    }
    if times.is_empty() || times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "output times must be positive and strictly increasing".into(),
        ));
    }
    let probes: Vec<usize> = if probes.is_empty() {
        vec![y_node]
    } else {
        probes.to_vec()
    };
    let mut runs: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut b = opts.base_steps.max(1);
    for k in 0..3 {
        runs.push(euler_run(op, y_node, times, b << k)?);
    }
    let mut previous = richardson(&runs[0], &runs[1], &runs[2]);
    let mut trace = Vec::new();
    loop {
        if (b << 3) > opts.max_steps {
            return Err(Error::Convergence {
                stage: "time stepper",
                detail: format!(
                    "no agreement to {} within {} steps per interval; trace {:?}",
                    opts.rel_tol, opts.max_steps, trace
                ),
            });
        }
        runs.remove(0);
        runs.push(euler_run(op, y_node, times, b << 3)?);
        let current = richardson(&runs[0], &runs[1], &runs[2]);
        let change = max_relative_change(&previous, &current, &probes, floors);
        trace.push((b << 1, change));
        b <<= 1;
        if change < opts.rel_tol {
            return Ok(TimestepResult {
                times: times.to_vec(),
                columns: current
                    .into_iter()
                    .map(|mut c| {
                        c.push(0.0);
                        c
                    })
                    .collect(),
                base_steps_used: b,
                trace,
            });
        }
        previous = current;
    }
}

/// Largest relative change at the probes. Values are compared against the
/// larger of themselves and a floor: `floors[t]` when given, otherwise `1e-6`
/// times the largest probe value over all times.
fn max_relative_change(a: &[Vec<f64>], b: &[Vec<f64>], probes: &[usize], floors: &[f64]) -> f64 {
    let peak = b
        .iter()
        .flat_map(|u| probes.iter().map(move |&p| u[p].abs()))
        .fold(0.0_f64, f64::max);
    let mut worst: f64 = 0.0;
    for (k, (ua, ub)) in a.iter().zip(b).enumerate() {
        let floor = floors.get(k).copied().unwrap_or(1e-6 * peak);
        for &p in probes {
            let denom = ub[p].abs().max(floor);
            if denom > 0.0 {
                worst = worst.max((ua[p] - ub[p]).abs() / denom);
            }
        }
    }
    worst
}

/// Eliminates the `O(h)` and `O(h²)` error terms from runs with `s`, `2s`
/// and `4s` steps.
fn richardson(a: &[Vec<f64>], b: &[Vec<f64>], c: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .zip(c)
        .map(|((x, y), z)| {
            x.iter()
                .zip(y)
                .zip(z)
                .map(|((x, y), z)| (x - 6.0 * y + 8.0 * z) / 3.0)
                .collect()
        })
        .collect()
}

fn euler_run(op: &SectorOperator, y_node: usize, times: &[f64], steps: usize) -> Result<Vec<Vec<f64>>> {
    let n = op.pencil.len();
    let k = &op.pencil.k;
    let m = &op.pencil.m;
    // Right-hand side M u_n; initially M M^{-1} e_y = e_y.
    let mut rhs = vec![0.0; n];
    rhs[y_node] = 1.0;
    let mut u = vec![0.0; n];
    let mut out = Vec::with_capacity(times.len());
    let graded = 4 * steps;
    let t1 = times[0];
    let mut t_prev = 0.0;
    for k_step in 1..=graded {
        let t_next = t1 * (k_step as f64 / graded as f64).powi(2);
        let system = m.axpy(t_next - t_prev, k);
        u.copy_from_slice(&rhs);
        system.factor()?.solve_in_place(&mut u);
        m.matvec_into(&u, &mut rhs);
        t_prev = t_next;
    }
    out.push(u.clone());
    for w in times.windows(2) {
        let dt = (w[1] - w[0]) / steps as f64;
        let factor = m.axpy(dt, k).factor()?;
        for _ in 0..steps {
            u.copy_from_slice(&rhs);
            factor.solve_in_place(&mut u);
            m.matvec_into(&u, &mut rhs);
        }
        out.push(u.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct AngularOptions {
    /// Stop once two consecutive sectors contribute less than this fraction.
    pub rel_tol: f64,
    /// Largest sector index tried.
    pub ell_cap: usize,
    /// Sectors evaluated concurrently per batch.
    pub batch: usize,
}

impl Default for AngularOptions {
    fn default() -> Self {
        AngularOptions {
            rel_tol: 1e-8,
            ell_cap: 128,
            batch: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagonalSeries {
    pub r: f64,
    pub times: Vec<f64>,
    /// `k_μ(t, x, x)` with `|x| = r`.
    pub values: Vec<f64>,
    pub sectors_used: usize,
}

/// On-diagonal full kernel `k_μ(t, x, x)` from time-stepped sector columns,
/// summing sectors until two consecutive contributions fall below `rel_tol`.
/// Sectors beyond the radial one are resolved relative to the radial
/// contribution, which is a lower bound for the full kernel.
pub fn oracle_diagonal(
    params: &OperatorParams,
    grid: &RadialGrid,
    node: usize,
    times: &[f64],
    step_opts: &TimestepOptions,
    ang: &AngularOptions,
) -> Result<DiagonalSeries> {
    let dim = params.dim();
    let z1 = zonal_values(dim, ang.ell_cap, 1.0);
    let radial_op = build_sector_operator(params, grid, 0);
    let radial = timestep_oracle(&radial_op, node, times, &[node], step_opts)?;
    let mut values: Vec<f64> = radial.columns.iter().map(|c| z1[0] * c[node]).collect();
    let base = values.clone();
    let mut quiet = 0;
    let mut ell = 1;
    while ell <= ang.ell_cap {
        let hi = (ell + ang.batch).min(ang.ell_cap + 1);
        let contributions = (ell..hi)
            .into_par_iter()
            .map(|l| {
                let op = build_sector_operator(params, grid, l);
                let floors: Vec<f64> = base.iter().map(|v| v / z1[l]).collect();
                let res = timestep_oracle_with_floor(&op, node, times, &[node], step_opts, &floors)?;
                Ok(res.columns.iter().map(|c| z1[l] * c[node]).collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        for contribution in contributions {
            let small = contribution
                .iter()
                .zip(&values)
                .all(|(c, v)| c.abs() <= ang.rel_tol * (v + c).abs());
            for (v, c) in values.iter_mut().zip(&contribution) {
                *v += c;
            }
            quiet = if small { quiet + 1 } else { 0 };
            ell += 1;
            if quiet >= 2 {
                return Ok(DiagonalSeries {
                    r: grid.nodes()[node],
                    times: times.to_vec(),
                    values,
                    sectors_used: ell,
                });
            }
        }
    }
    Err(Error::AngularTruncation {
        l_max: ang.ell_cap,
        estimate: f64::NAN,
        tolerance: ang.rel_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_grid, Grading, RMax};
    use approx::assert_relative_eq;

    fn setup() -> (OperatorParams, RadialGrid) {
        let p = OperatorParams::new(3, 2.0, 4.0, false).unwrap();
        let g = build_grid(&p, RMax::Auto, 256, Grading::Uniform).unwrap();
        (p, g)
    }

    #[test]
    fn expansion_refuses_small_times() {
        let (p, g) = setup();
        let exp = SectorExpansion::compute(&build_sector_operator(&p, &g, 0), 0.1, 400).unwrap();
        match exp.value(0.001, 3, 3) {
            Err(Error::InsufficientResolution { smallest_usable_t, .. }) => {
                assert!(smallest_usable_t >= MIN_EXPANSION_T)
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(exp.value(0.1, 3, 3).is_ok());
    }

    #[test]
    fn long_time_limit_is_ground_projector() {
        let (p, g) = setup();
        let exp = SectorExpansion::compute(&build_sector_operator(&p, &g, 0), 0.5, 400).unwrap();
        let t = 20.0 / exp.top().abs();
        let i = g.nearest_node(1.5);
        let v = exp.value(t, i, i).unwrap() * (-exp.top() * t).exp();
        assert_relative_eq!(v, exp.vectors[0][i].powi(2), max_relative = 1e-8);
    }

    #[test]
    fn time_stepper_matches_expansion() {
        let (p, g) = setup();
        let op = build_sector_operator(&p, &g, 0);
        let exp = SectorExpansion::compute(&op, 0.5, 400).unwrap();
        let y = g.nearest_node(1.0);
        let res = timestep_oracle(&op, y, &[0.5], &[y], &TimestepOptions::default()).unwrap();
        let col = exp.column(0.5, y).unwrap();
        for i in [g.nearest_node(0.5), y, g.nearest_node(2.0)] {
            assert_relative_eq!(res.columns[0][i], col[i], max_relative = 1e-5);
        }
    }

    #[test]
    fn lebesgue_relation() {
        let p = OperatorParams::new(3, 2.0, 4.0, false).unwrap();
        assert_eq!(lebesgue_kernel(&p, 3.0, 0.0), 3.0);
        assert_eq!(lebesgue_kernel(&p, 3.0, 1.0), 1.5);
    }

    #[test]
    fn tail_estimate_geometric() {
        assert_relative_eq!(tail_estimate(&[1.0, 0.5, 0.25]), 0.25);
        assert!(tail_estimate(&[1.0, 2.0]).is_finite());
    }
}
