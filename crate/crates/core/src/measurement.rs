//! Born-rule sampling and the impulsive von Neumann pointer coupling.
//!
//! The pointer lives on a periodic grid. Coupling to an observable `A` with
//! strength `g` applies `exp(−i g A⊗p̂)` exactly: each eigencomponent of the
//! system drags its pointer wavefunction by `g·a`, with the translation done
//! as a phase ramp in the pointer's Fourier basis. `ħ = 1`.

use std::sync::Arc;

use rand::Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    check_dim, dot, eigendecompose, EigenDecomposition, Eigenspace, HermitianOperator,
    StateVector, C64,
};

/// Joint-state norm tolerance.
pub const JOINT_NORM_TOL: f64 = 1e-10;
/// Grid points used by [`PointerGrid::for_width`].
pub const DEFAULT_POINTS: usize = 512;
/// Default grid extent in pointer widths.
pub const DEFAULT_EXTENT_WIDTHS: f64 = 40.0;
/// Minimum extent, in pointer widths, accepted by [`make_pointer`].
pub const MIN_EXTENT_WIDTHS: f64 = 20.0;
/// Minimum pointer width, in grid spacings, accepted by [`make_pointer`].
pub const MIN_WIDTH_SPACINGS: f64 = 4.0;

/// Uniform periodic grid for the pointer position.
///
/// Point `j` sits at `center + (j − n/2)·spacing`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointerGrid {
    n_points: usize,
    spacing: f64,
    center: f64,
}

impl PointerGrid {
    pub fn new(n_points: usize, spacing: f64, center: f64) -> Result<Self> {
        if n_points < 16 || !n_points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n_points must be a power of two >= 16, got {n_points}"
            )));
        }
        check_dim(n_points)?;
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {spacing}")));
        }
        if !center.is_finite() {
            return Err(Error::InvalidGrid(format!("center must be finite, got {center}")));
        }
        Ok(Self {
            n_points,
            spacing,
            center,
        })
    }

    /// 512 points spanning 40 pointer widths, centered at zero.
    pub fn for_width(width: f64) -> Result<Self> {
        Self::new(
            DEFAULT_POINTS,
            DEFAULT_EXTENT_WIDTHS * width / DEFAULT_POINTS as f64,
            0.0,
        )
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn extent(&self) -> f64 {
        self.n_points as f64 * self.spacing
    }

    pub fn position(&self, j: usize) -> f64 {
        self.center + (j as f64 - (self.n_points / 2) as f64) * self.spacing
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.position(j)).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn momenta(&self) -> Vec<f64> {
        let n = self.n_points as i64;
        let dk = 2.0 * std::f64::consts::PI / self.extent();
        (0..n)
            .map(|m| if m < n / 2 { m as f64 * dk } else { (m - n) as f64 * dk })
            .collect()
    }

    pub(crate) fn check_shift(&self, shift: f64) -> Result<()> {
        let extent = self.extent();
        if !shift.is_finite() || shift.abs() > extent / 4.0 {
            return Err(Error::Wraparound {
                shift,
                extent,
                required_extent: 4.0 * shift.abs(),
            });
        }
        Ok(())
    }
}

/// Pointer wavefunction on its own, normalized as `Σ|χ|²·spacing = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointerState {
    grid: PointerGrid,
    amplitudes: Vec<C64>,
}

impl PointerState {
    pub fn grid(&self) -> &PointerGrid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        grid_norm(&self.amplitudes, self.grid.spacing)
    }

    pub fn mean(&self) -> f64 {
        moments(&self.grid, self.amplitudes.iter().map(|a| a.norm_sqr())).1
    }

    pub fn variance(&self) -> f64 {
        let (_, mean, second) = moments(&self.grid, self.amplitudes.iter().map(|a| a.norm_sqr()));
        second - mean * mean
    }
}

fn grid_norm(amplitudes: &[C64], spacing: f64) -> f64 {
    amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * spacing
}

/// `(Σρ·dx, Σxρ·dx / Σρ·dx, Σx²ρ·dx / Σρ·dx)` for a density on the grid.
fn moments(grid: &PointerGrid, density: impl Iterator<Item = f64>) -> (f64, f64, f64) {
    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (j, rho) in density.enumerate() {
        let x = grid.position(j);
        m0 += rho;
        m1 += x * rho;
        m2 += x * x * rho;
    }
    let dx = grid.spacing;
    (m0 * dx, m1 / m0, m2 / m0)
}

/// Gaussian ready state whose position density has standard deviation `width`.
pub fn make_pointer(grid: PointerGrid, width: f64) -> Result<PointerState> {
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::UnderResolvedPointer {
            width,
            reason: "width must be positive".into(),
        });
    }
    if width < MIN_WIDTH_SPACINGS * grid.spacing {
        return Err(Error::UnderResolvedPointer {
            width,
            reason: format!(
                "width must be at least {MIN_WIDTH_SPACINGS} spacings ({})",
                MIN_WIDTH_SPACINGS * grid.spacing
            ),
        });
    }
    if grid.extent() < MIN_EXTENT_WIDTHS * width {
        return Err(Error::UnderResolvedPointer {
            width,
            reason: format!(
                "grid extent {} is below {MIN_EXTENT_WIDTHS} widths",
                grid.extent()
            ),
        });
    }
    let mut amplitudes: Vec<C64> = grid
        .positions()
        .into_iter()
        .map(|x| {
            let u = (x - grid.center) / width;
            C64::new((-0.25 * u * u).exp(), 0.0)
        })
        .collect();
    let inv = 1.0 / grid_norm(&amplitudes, grid.spacing).sqrt();
    for a in &mut amplitudes {
        *a *= inv;
    }
    Ok(PointerState { grid, amplitudes })
}

/// Joint amplitudes `⟨i, x|state⟩`, stored system-index major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "JointJson", try_from = "JointJson")]
pub struct JointSystemPointerState {
    system_dim: usize,
    grid: PointerGrid,
    amplitudes: Vec<C64>,
}

impl JointSystemPointerState {
    /// `|system⟩ ⊗ |χ⟩`.
    pub fn product(system: &StateVector, pointer: &PointerState) -> Result<Self> {
        let n = pointer.grid.n_points;
        check_dim(system.dim() * n)?;
        let mut amplitudes = Vec::with_capacity(system.dim() * n);
        for s in system.amplitudes() {
            amplitudes.extend(pointer.amplitudes.iter().map(|p| s * p));
        }
        Ok(Self {
            system_dim: system.dim(),
            grid: pointer.grid,
            amplitudes,
        })
    }

    pub fn from_amplitudes(
        system_dim: usize,
        grid: PointerGrid,
        amplitudes: Vec<C64>,
    ) -> Result<Self> {
        check_dim(system_dim * grid.n_points)?;
        if amplitudes.len() != system_dim * grid.n_points {
            return Err(Error::DimensionMismatch {
                left: amplitudes.len(),
                right: system_dim * grid.n_points,
            });
        }
        let state = Self {
            system_dim,
            grid,
            amplitudes,
        };
        let norm = state.norm();
        if !((norm - 1.0).abs() < JOINT_NORM_TOL) {
            return Err(Error::NotNormalized { norm_sqr: norm });
        }
        Ok(state)
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }

    pub fn grid(&self) -> &PointerGrid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    /// Pointer wavefunction attached to system basis state `i`.
    pub fn system_row(&self, i: usize) -> &[C64] {
        let n = self.grid.n_points;
        &self.amplitudes[i * n..(i + 1) * n]
    }

    pub fn norm(&self) -> f64 {
        grid_norm(&self.amplitudes, self.grid.spacing)
    }

    /// Position density of the pointer with the system traced out.
    pub fn pointer_density(&self) -> Vec<f64> {
        let n = self.grid.n_points;
        (0..n)
            .map(|x| {
                (0..self.system_dim)
                    .map(|i| self.amplitudes[i * n + x].norm_sqr())
                    .sum()
            })
            .collect()
    }

    /// `(⟨post| ⊗ 1)|state⟩`: the unnormalized pointer wavefunction left
    /// after postselecting the system on `post`, and its weight.
    pub fn postselect(&self, post: &StateVector) -> Result<(Vec<C64>, f64)> {
        if post.dim() != self.system_dim {
            return Err(Error::DimensionMismatch {
                left: post.dim(),
                right: self.system_dim,
            });
        }
        let n = self.grid.n_points;
        let mut pointer = vec![C64::new(0.0, 0.0); n];
        for (i, c) in post.amplitudes().iter().enumerate() {
            let c = c.conj();
            for (p, a) in pointer.iter_mut().zip(self.system_row(i)) {
                *p += c * a;
            }
        }
        let weight = grid_norm(&pointer, self.grid.spacing);
        Ok((pointer, weight))
    }

    /// Applies `|s⟩⟨s| ⊗ 1`, renormalizes, and returns the branch weight.
    /// `None` when the branch has zero weight.
    pub fn project_and_renormalize(&self, onto: &StateVector) -> Result<(Option<Self>, f64)> {
        let (pointer, weight) = self.postselect(onto)?;
        if !(weight > 0.0) {
            return Ok((None, 0.0));
        }
        let inv = 1.0 / weight.sqrt();
        let n = self.grid.n_points;
        let mut amplitudes = Vec::with_capacity(self.system_dim * n);
        for s in onto.amplitudes() {
            amplitudes.extend(pointer.iter().map(|p| s * p * inv));
        }
        Ok((
            Some(Self {
                system_dim: self.system_dim,
                grid: self.grid,
                amplitudes,
            }),
            weight,
        ))
    }
}

/// Pointer first moment `Σ x·|amp|²·spacing`.
pub fn pointer_position_mean(joint: &JointSystemPointerState) -> f64 {
    moments(&joint.grid, joint.pointer_density().into_iter()).1
}

/// Mean position of an unnormalized pointer wavefunction.
pub fn wavefunction_mean(grid: &PointerGrid, amplitudes: &[C64]) -> f64 {
    moments(grid, amplitudes.iter().map(|a| a.norm_sqr())).1
}

/// Precomputed `exp(−i g A⊗p̂)` for repeated application.
pub struct PointerCoupling {
    eigen: EigenDecomposition,
    grid: PointerGrid,
    coupling: f64,
    phases: Vec<Vec<C64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl PointerCoupling {
    pub fn new(op: &HermitianOperator, coupling: f64, grid: PointerGrid) -> Result<Self> {
        let eigen = eigendecompose(op)?;
        Self::from_eigen(eigen, coupling, grid)
    }

    pub fn from_eigen(eigen: EigenDecomposition, coupling: f64, grid: PointerGrid) -> Result<Self> {
        grid.check_shift(coupling * eigen.max_abs_eigenvalue())?;
        let momenta = grid.momenta();
        let phases = eigen
            .eigenvalues()
            .iter()
            .map(|a| {
                let shift = coupling * a;
                momenta.iter().map(|k| C64::from_polar(1.0, -k * shift)).collect()
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            forward: planner.plan_fft_forward(grid.n_points),
            inverse: planner.plan_fft_inverse(grid.n_points),
            eigen,
            grid,
            coupling,
            phases,
        })
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn eigen(&self) -> &EigenDecomposition {
        &self.eigen
    }

    pub fn apply(&self, joint: &JointSystemPointerState) -> Result<JointSystemPointerState> {
        if joint.system_dim != self.eigen.dim() {
            return Err(Error::DimensionMismatch {
                left: joint.system_dim,
                right: self.eigen.dim(),
            });
        }
        if joint.grid != self.grid {
            return Err(Error::InvalidGrid("coupling was prepared for a different grid".into()));
        }
        if self.coupling == 0.0 {
            return Ok(joint.clone());
        }
        let n = self.grid.n_points;
        let d = joint.system_dim;
        let scale = 1.0 / n as f64;
        let mut out = vec![C64::new(0.0, 0.0); d * n];
        let mut component = vec![C64::new(0.0, 0.0); n];
        for (k, v) in self.eigen.eigenvectors().iter().enumerate() {
            component.iter_mut().for_each(|c| *c = C64::new(0.0, 0.0));
            for (i, vi) in v.amplitudes().iter().enumerate() {
                let vi = vi.conj();
                for (c, a) in component.iter_mut().zip(joint.system_row(i)) {
                    *c += vi * a;
                }
            }
            self.forward.process(&mut component);
            for (c, phase) in component.iter_mut().zip(&self.phases[k]) {
                *c *= phase * scale;
            }
            self.inverse.process(&mut component);
            for (i, vi) in v.amplitudes().iter().enumerate() {
                for (o, c) in out[i * n..(i + 1) * n].iter_mut().zip(&component) {
                    *o += vi * c;
                }
            }
        }
        Ok(JointSystemPointerState {
            system_dim: d,
            grid: self.grid,
            amplitudes: out,
        })
    }
}

/// One impulsive coupling `exp(−i g A⊗p̂)`.
pub fn couple_pointer(
    joint: &JointSystemPointerState,
    op: &HermitianOperator,
    coupling: f64,
) -> Result<JointSystemPointerState> {
    PointerCoupling::new(op, coupling, joint.grid)?.apply(joint)
}

/// `|⟨vᵢ|ψ⟩|²` for every basis vector, in basis order.
pub fn born_probabilities(psi: &StateVector, basis: &EigenDecomposition) -> Result<Vec<f64>> {
    if psi.dim() != basis.dim() {
        return Err(Error::DimensionMismatch {
            left: psi.dim(),
            right: basis.dim(),
        });
    }
    Ok(basis
        .eigenvectors()
        .iter()
        .map(|v| dot(v.amplitudes(), psi.amplitudes()).norm_sqr())
        .collect())
}

/// Born weights summed over each eigenspace.
pub fn eigenspace_probabilities(
    psi: &StateVector,
    basis: &EigenDecomposition,
) -> Result<Vec<(Eigenspace, f64)>> {
    let p = born_probabilities(psi, basis)?;
    Ok(basis
        .eigenspaces()
        .into_iter()
        .map(|space| {
            let w = space.indices.iter().map(|&i| p[i]).sum();
            (space, w)
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct OutcomeSample {
    pub eigenvalue: f64,
    /// Index into [`EigenDecomposition::eigenspaces`].
    pub outcome_index: usize,
    pub collapsed: StateVector,
    pub probability: f64,
}

/// Projective measurement with Lüders collapse onto the outcome eigenspace.
pub fn strong_measure<R: Rng + ?Sized>(
    psi: &StateVector,
    basis: &EigenDecomposition,
    rng: &mut R,
) -> Result<OutcomeSample> {
    let spaces = eigenspace_probabilities(psi, basis)?;
    let total: f64 = spaces.iter().map(|(_, w)| w).sum();
    if !(total > 1e-300) {
        return Err(Error::DegenerateInput);
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut chosen = None;
    for (idx, (_, w)) in spaces.iter().enumerate() {
        acc += w;
        if *w > 0.0 && u < acc {
            chosen = Some(idx);
            break;
        }
    }
    let idx = chosen.unwrap_or_else(|| {
        spaces.iter().rposition(|(_, w)| *w > 0.0).expect("total weight is positive")
    });
    let (space, probability) = &spaces[idx];
    let mut collapsed = vec![C64::new(0.0, 0.0); psi.dim()];
    for &i in &space.indices {
        let v = &basis.eigenvectors()[i];
        let c = dot(v.amplitudes(), psi.amplitudes());
        for (out, vi) in collapsed.iter_mut().zip(v.amplitudes()) {
            *out += vi * c;
        }
    }
    Ok(OutcomeSample {
        eigenvalue: space.eigenvalue,
        outcome_index: idx,
        collapsed: StateVector::normalized(collapsed)?,
        probability: *probability,
    })
}

#[derive(Serialize, Deserialize)]
struct JointJson {
    system_dim: usize,
    grid: PointerGrid,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl From<JointSystemPointerState> for JointJson {
    fn from(s: JointSystemPointerState) -> Self {
        Self {
            system_dim: s.system_dim,
            grid: s.grid,
            re: s.amplitudes.iter().map(|a| a.re).collect(),
            im: s.amplitudes.iter().map(|a| a.im).collect(),
        }
    }
}

impl TryFrom<JointJson> for JointSystemPointerState {
    type Error = Error;

    fn try_from(j: JointJson) -> Result<Self> {
        if j.re.len() != j.im.len() {
            return Err(Error::DimensionMismatch {
                left: j.re.len(),
                right: j.im.len(),
            });
        }
        let grid = PointerGrid::new(j.grid.n_points, j.grid.spacing, j.grid.center)?;
        let amplitudes = j.re.iter().zip(&j.im).map(|(&r, &i)| C64::new(r, i)).collect();
        Self::from_amplitudes(j.system_dim, grid, amplitudes)
    }
}
