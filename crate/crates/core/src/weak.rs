//! Weak values with pre- and postselection, and the direct wavefunction scan.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{dot, inner_product, HermitianOperator, StateVector, C64, RESIDUE_TOL};
use crate::measurement::{
    make_pointer, wavefunction_mean, JointSystemPointerState, PointerCoupling, PointerGrid,
};

/// Smallest `|⟨post|pre⟩|` for which a weak value is defined.
pub const MIN_OVERLAP: f64 = 1e-12;
/// Smallest `|⟨p=0|Ψ⟩|` for which the direct scan is defined.
pub const MIN_ZERO_MOMENTUM: f64 = 1e-10;
/// Smallest simulated postselection probability accepted.
pub const MIN_POSTSELECTION: f64 = 1e-15;

#[derive(Clone, Debug)]
pub struct WeakValueResult {
    pub value: C64,
    pub pre: StateVector,
    pub post: StateVector,
    /// `⟨post|pre⟩`
    pub overlap: C64,
}

/// `⟨post|A|pre⟩ / ⟨post|pre⟩`.
pub fn weak_value(
    op: &HermitianOperator,
    pre: &StateVector,
    post: &StateVector,
) -> Result<WeakValueResult> {
    let overlap = inner_product(post, pre)?;
    if !(overlap.norm() > MIN_OVERLAP) {
        return Err(Error::UndefinedWeakValue {
            overlap: overlap.norm(),
        });
    }
    let a_pre = op.apply(pre)?;
    let value = dot(post.amplitudes(), &a_pre) / overlap;
    if pre.equal_up_to_phase(post) && value.im.abs() >= RESIDUE_TOL {
        return Err(Error::ImaginaryResidue {
            residue: value.im.abs(),
        });
    }
    Ok(WeakValueResult {
        value,
        pre: pre.clone(),
        post: post.clone(),
        overlap,
    })
}

/// Transverse wavefunction sampled on a grid, `Σ|Ψ(x)|²·spacing = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridWavefunction {
    grid: PointerGrid,
    amplitudes: Vec<C64>,
}

impl GridWavefunction {
    pub fn new(grid: PointerGrid, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != grid.n_points() {
            return Err(Error::DimensionMismatch {
                left: amplitudes.len(),
                right: grid.n_points(),
            });
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * grid.spacing();
        if !((norm - 1.0).abs() < 1e-10) {
            return Err(Error::NotNormalized { norm_sqr: norm });
        }
        Ok(Self { grid, amplitudes })
    }

    /// Samples `f` at every grid point and normalizes.
    pub fn from_fn(grid: PointerGrid, f: impl Fn(f64) -> C64) -> Result<Self> {
        let mut amplitudes: Vec<C64> = grid.positions().into_iter().map(f).collect();
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * grid.spacing();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NotNormalized { norm_sqr: norm });
        }
        let inv = 1.0 / norm.sqrt();
        amplitudes.iter_mut().for_each(|a| *a *= inv);
        Ok(Self { grid, amplitudes })
    }

    /// Gaussian envelope `exp(−(x−x₀)²/4σ²)·e^{ikx}`.
    pub fn gaussian(grid: PointerGrid, center: f64, width: f64, wavenumber: f64) -> Result<Self> {
        Self::from_fn(grid, |x| {
            let u = (x - center) / width;
            C64::from_polar((-0.25 * u * u).exp(), wavenumber * x)
        })
    }

    pub fn grid(&self) -> &PointerGrid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    /// `⟨p=0|Ψ⟩ = Σ Ψ(x)·spacing`.
    pub fn zero_momentum_component(&self) -> C64 {
        self.amplitudes.iter().sum::<C64>() * self.grid.spacing()
    }
}

#[derive(Clone, Debug)]
pub struct DirectScan {
    pub grid: PointerGrid,
    /// Weak value of the cell projector `Π_x / spacing` at each grid point.
    pub weak_values: Vec<C64>,
    /// `⟨p=0|Ψ⟩`, the common factor relating the scan to `Ψ(x)`.
    pub zero_momentum_component: C64,
}

impl DirectScan {
    /// `weak_values · ⟨p=0|Ψ⟩`: the input wavefunction itself.
    pub fn recovered(&self) -> Vec<C64> {
        self.weak_values
            .iter()
            .map(|w| w * self.zero_momentum_component)
            .collect()
    }

    /// The scan rescaled to unit norm, without knowledge of `⟨p=0|Ψ⟩`.
    /// Equals `Ψ(x)` up to the global phase of `⟨p=0|Ψ⟩`.
    pub fn normalized(&self) -> Vec<C64> {
        let norm: f64 =
            self.weak_values.iter().map(|w| w.norm_sqr()).sum::<f64>() * self.grid.spacing();
        let inv = 1.0 / norm.sqrt();
        self.weak_values.iter().map(|w| w * inv).collect()
    }

    /// Tidy CSV: `x, re_scan, im_scan, re_psi_true, im_psi_true`, with the
    /// scan in its unit-norm form.
    pub fn write_csv<W: Write>(&self, truth: &GridWavefunction, out: W) -> Result<()> {
        if truth.grid != self.grid {
            return Err(Error::InvalidGrid("scan and reference grids differ".into()));
        }
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(SCAN_CSV_HEADER)?;
        for ((x, s), t) in self
            .grid
            .positions()
            .into_iter()
            .zip(self.normalized())
            .zip(truth.amplitudes())
        {
            w.serialize(ScanRow {
                x,
                re_scan: s.re,
                im_scan: s.im,
                re_psi_true: t.re,
                im_psi_true: t.im,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const SCAN_CSV_HEADER: [&str; 5] = ["x", "re_scan", "im_scan", "re_psi_true", "im_psi_true"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub x: f64,
    pub re_scan: f64,
    pub im_scan: f64,
    pub re_psi_true: f64,
    pub im_psi_true: f64,
}

/// Weak value of each grid-cell projector, postselected on the uniform
/// (zero-momentum) grid state.
///
/// With `|ψ⟩ = Σ Ψ(x)√dx |x⟩` and `|p=0⟩ = Σ |x⟩/√N`, the cell projector
/// weighted by `1/dx` has weak value `Ψ(x) / Σ Ψ(x')dx'`.
pub fn direct_wavefunction_scan(psi: &GridWavefunction) -> Result<DirectScan> {
    let component = psi.zero_momentum_component();
    if !(component.norm() > MIN_ZERO_MOMENTUM) {
        return Err(Error::ScanUndefined {
            component: component.norm(),
        });
    }
    let n = psi.grid.n_points() as f64;
    let dx = psi.grid.spacing();
    let pre_norm = dx.sqrt();
    let post = 1.0 / n.sqrt();
    // ⟨p=0|ψ⟩ on the discrete grid.
    let overlap = psi.amplitudes.iter().sum::<C64>() * pre_norm * post;
    let weak_values = psi
        .amplitudes
        .iter()
        .map(|a| post * (a * pre_norm) / overlap / dx)
        .collect();
    Ok(DirectScan {
        grid: psi.grid,
        weak_values,
        zero_momentum_component: component,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakShift {
    pub mean_shift: f64,
    pub post_success_probability: f64,
}

/// Full joint-state simulation of one weak step: couple with strength `g`,
/// postselect the system on `post`, read the conditional pointer mean.
pub fn weak_pointer_shift(
    psi: &StateVector,
    op: &HermitianOperator,
    post: &StateVector,
    coupling: f64,
    grid: PointerGrid,
    width: f64,
) -> Result<WeakShift> {
    let overlap = inner_product(post, psi)?;
    if !(overlap.norm() > MIN_OVERLAP) {
        return Err(Error::UndefinedWeakValue {
            overlap: overlap.norm(),
        });
    }
    let chi = make_pointer(grid, width)?;
    let joint = JointSystemPointerState::product(psi, &chi)?;
    let coupled = PointerCoupling::new(op, coupling, grid)?.apply(&joint)?;
    let (pointer, probability) = coupled.postselect(post)?;
    if !(probability >= MIN_POSTSELECTION) {
        return Err(Error::PostselectionUndefined { probability });
    }
    Ok(WeakShift {
        mean_shift: wavefunction_mean(&grid, &pointer) - chi.mean(),
        post_success_probability: probability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{expectation, projector};

    #[test]
    fn equal_pre_post_gives_expectation() {
        let psi = StateVector::normalized(vec![C64::new(0.6, 0.1), C64::new(-0.2, 0.7)]).unwrap();
        let a = HermitianOperator::pauli_x();
        let wv = weak_value(&a, &psi, &psi).unwrap();
        assert!((wv.value.re - expectation(&a, &psi).unwrap()).abs() < 1e-12);
        assert!(wv.value.im.abs() < 1e-10);
    }

    #[test]
    fn formula_examples() {
        let z = HermitianOperator::pauli_z();
        let wv = weak_value(&z, &StateVector::plus(), &StateVector::zero()).unwrap();
        assert!((wv.value - C64::new(1.0, 0.0)).norm() < 1e-12);
        let p1 = projector(&StateVector::one());
        let wv = weak_value(&p1, &StateVector::plus(), &StateVector::zero()).unwrap();
        assert!(wv.value.norm() < 1e-15);
    }

    #[test]
    fn orthogonal_pre_post_is_undefined() {
        let r = weak_value(&HermitianOperator::pauli_x(), &StateVector::zero(), &StateVector::one());
        assert!(matches!(r, Err(Error::UndefinedWeakValue { overlap }) if overlap == 0.0));
    }

    fn scan_grid() -> PointerGrid {
        PointerGrid::new(256, 0.1, 0.0).unwrap()
    }

    #[test]
    fn scan_matches_cell_projector_weak_values() {
        // Cross-check the closed form against weak_value() on explicit
        // projectors for a small grid.
        let grid = PointerGrid::new(32, 0.25, 0.0).unwrap();
        let psi = GridWavefunction::gaussian(grid, 0.3, 0.8, 0.4).unwrap();
        let scan = direct_wavefunction_scan(&psi).unwrap();
        let pre = StateVector::normalized(psi.amplitudes().to_vec()).unwrap();
        let post = StateVector::from_real(&vec![1.0; 32]).unwrap();
        for j in [0, 7, 16, 31] {
            let cell = projector(&StateVector::basis(32, j).unwrap());
            let wv = weak_value(&cell, &pre, &post).unwrap().value / grid.spacing();
            assert!((wv - scan.weak_values[j]).norm() < 1e-12 * (1.0 + wv.norm()));
        }
    }

    #[test]
    fn gaussian_scan_recovers_input() {
        let psi = GridWavefunction::gaussian(scan_grid(), -0.5, 1.5, 0.7).unwrap();
        let scan = direct_wavefunction_scan(&psi).unwrap();
        for (r, t) in scan.recovered().iter().zip(psi.amplitudes()) {
            if t.norm() > 1e-6 {
                assert!((r - t).norm() / t.norm() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_wavefunction_gives_constant_scan() {
        let psi = GridWavefunction::from_fn(scan_grid(), |_| C64::new(1.0, 0.0)).unwrap();
        let scan = direct_wavefunction_scan(&psi).unwrap();
        let first = scan.weak_values[0];
        assert!(scan.weak_values.iter().all(|w| (w - first).norm() < 1e-12));
    }

    #[test]
    fn odd_wavefunction_is_undefined() {
        // Odd about x = 0; the one unpaired endpoint sample is ~e^-160.
        let grid = scan_grid();
        let mid = grid.position(grid.n_points() / 2);
        let psi = GridWavefunction::from_fn(grid, |x| {
            let u = x - mid;
            C64::new(u * (-u * u).exp(), 0.0)
        })
        .unwrap();
        assert!(matches!(
            direct_wavefunction_scan(&psi),
            Err(Error::ScanUndefined { .. })
        ));
    }

    #[test]
    fn scan_csv_layout() {
        let psi = GridWavefunction::gaussian(scan_grid(), 0.0, 1.0, 0.0).unwrap();
        let scan = direct_wavefunction_scan(&psi).unwrap();
        let mut buf = Vec::new();
        scan.write_csv(&psi, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x,re_scan,im_scan,re_psi_true,im_psi_true");
        assert_eq!(lines.count(), 256);
    }

    #[test]
    fn pointer_shift_on_eigenstate_is_exact() {
        let grid = PointerGrid::for_width(1.0).unwrap();
        let one = StateVector::one();
        let s = weak_pointer_shift(&one, &HermitianOperator::pauli_z(), &one, 0.2, grid, 1.0)
            .unwrap();
        assert!((s.mean_shift + 0.2).abs() < 1e-9);
        assert!((s.post_success_probability - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pointer_shift_tracks_expectation_for_equal_pre_post() {
        let grid = PointerGrid::for_width(1.0).unwrap();
        let psi = StateVector::real_qubit(0.4);
        let a = HermitianOperator::pauli_x();
        let g = 1e-3;
        let s = weak_pointer_shift(&psi, &a, &psi, g, grid, 1.0).unwrap();
        let ev = expectation(&a, &psi).unwrap();
        assert!((s.mean_shift / g - ev).abs() < 1e-4);
    }

    #[test]
    fn pointer_shift_rejects_orthogonal_postselection() {
        let grid = PointerGrid::for_width(1.0).unwrap();
        let r = weak_pointer_shift(
            &StateVector::zero(),
            &HermitianOperator::pauli_x(),
            &StateVector::one(),
            0.1,
            grid,
            1.0,
        );
        assert!(matches!(r, Err(Error::UndefinedWeakValue { .. })));
    }
}
