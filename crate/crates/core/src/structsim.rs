//! Lumped-mass shear-frame simulator: white-noise base excitation, damage as
//! story stiffness loss, Newmark-β (average acceleration) time stepping, and
//! an additive white Gaussian noise injector.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::{Recording, RecordingMeta};
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};

/// Shear building with one degree of freedom per floor. Element `i` is the
/// story spring between floor `i - 1` (the ground for `i = 0`) and floor `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShearModel {
    pub masses: Vec<f64>,
    pub stiffnesses: Vec<f64>,
    /// Modal damping ratios at the lowest and highest mode (Rayleigh anchors).
    pub damping_ratios: [f64; 2],
}

impl ShearModel {
    pub fn uniform(n_dof: usize, mass: f64, stiffness: f64, damping: f64) -> Self {
        ShearModel {
            masses: vec![mass; n_dof],
            stiffnesses: vec![stiffness; n_dof],
            damping_ratios: [damping, damping],
        }
    }

    pub fn n_dof(&self) -> usize {
        self.masses.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.masses.len();
        if n == 0 || self.stiffnesses.len() != n {
            return Err(Error::Model(format!(
                "{} masses and {} stiffnesses",
                n,
                self.stiffnesses.len()
            )));
        }
        if self.masses.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::Model("masses must be positive".into()));
        }
        if self
            .stiffnesses
            .iter()
            .any(|&k| !(k > 0.0 && k.is_finite()))
        {
            return Err(Error::Model("stiffnesses must be positive".into()));
        }
        if self.damping_ratios.iter().any(|z| !(0.0..=0.2).contains(z)) {
            return Err(Error::Model("damping ratios must lie in [0, 0.2]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementDamage {
    pub element: usize,
    /// Fraction of the element stiffness removed, in (0, 1).
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DamageSpec {
    pub elements: Vec<ElementDamage>,
}

impl DamageSpec {
    pub fn none() -> Self {
        DamageSpec::default()
    }

    pub fn uniform(elements: &[usize], reduction: f64) -> Self {
        DamageSpec {
            elements: elements
                .iter()
                .map(|&element| ElementDamage { element, reduction })
                .collect(),
        }
    }

    pub fn damaged_elements(&self) -> Vec<usize> {
        self.elements.iter().map(|d| d.element).collect()
    }

    fn validate(&self, n_dof: usize) -> Result<()> {
        for d in &self.elements {
            if d.element >= n_dof {
                return Err(Error::Model(format!(
                    "damaged element {} outside 0..{n_dof}",
                    d.element
                )));
            }
            if !(d.reduction > 0.0 && d.reduction < 1.0) {
                return Err(Error::Model(format!(
                    "stiffness reduction {} outside (0, 1)",
                    d.reduction
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSpec {
    pub fs: f64,
    pub duration: f64,
    /// Standard deviation of the white-noise ground acceleration, m/s².
    pub noise_std: f64,
    pub seed: u64,
    /// Newmark steps per output sample; ground acceleration is linearly
    /// interpolated between samples.
    pub substeps: usize,
}

impl ExcitationSpec {
    pub fn samples(&self) -> Result<usize> {
        if !(self.fs > 0.0) || !(self.duration > 0.0) {
            return Err(Error::InvalidParameter(
                "fs and duration must be > 0".into(),
            ));
        }
        let n = self.fs * self.duration;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "duration * fs = {n} is not an integer sample count"
            )));
        }
        if self.substeps == 0 {
            return Err(Error::InvalidParameter("substeps must be >= 1".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::InvalidParameter("noise_std must be >= 0".into()));
        }
        Ok(n.round() as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub mass: DMatrix<f64>,
    pub damping: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
}

/// Mass, Rayleigh damping and tridiagonal shear stiffness matrices, with
/// damaged elements scaled by `1 - reduction`. The Rayleigh coefficients are
/// fitted to the lowest and highest natural frequency of the assembled
/// (possibly damaged) system.
pub fn assemble(model: &ShearModel, damage: Option<&DamageSpec>) -> Result<SystemMatrices> {
    model.validate()?;
    let n = model.n_dof();
    let mut k_el = model.stiffnesses.clone();
    if let Some(d) = damage {
        d.validate(n)?;
        for e in &d.elements {
            k_el[e.element] *= 1.0 - e.reduction;
        }
    }
    let mass = DMatrix::from_diagonal(&DVector::from_vec(model.masses.clone()));
    let mut stiffness = DMatrix::zeros(n, n);
    for (e, &k) in k_el.iter().enumerate() {
        stiffness[(e, e)] += k;
        if e > 0 {
            stiffness[(e - 1, e - 1)] += k;
            stiffness[(e - 1, e)] -= k;
            stiffness[(e, e - 1)] -= k;
        }
    }
    let freqs = modal_frequencies(&mass, &stiffness)?;
    let w_lo = 2.0 * std::f64::consts::PI * freqs[0];
    let w_hi = 2.0 * std::f64::consts::PI * freqs[n - 1];
    let [z_lo, z_hi] = model.damping_ratios;
    let (a0, a1) = if (w_hi - w_lo).abs() <= 1e-12 * w_hi {
        (z_lo * w_lo, z_lo / w_lo)
    } else {
        let d = w_hi * w_hi - w_lo * w_lo;
        (
            2.0 * w_lo * w_hi * (z_lo * w_hi - z_hi * w_lo) / d,
            2.0 * (z_hi * w_hi - z_lo * w_lo) / d,
        )
    };
    let damping = &mass * a0 + &stiffness * a1;
    Ok(SystemMatrices {
        mass,
        damping,
        stiffness,
    })
}

/// Natural frequencies in Hz, ascending: `sqrt(eig(M⁻¹K)) / 2π`.
pub fn modal_frequencies(mass: &DMatrix<f64>, stiffness: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = mass.nrows();
    if n == 0 || mass.shape() != (n, n) || stiffness.shape() != (n, n) {
        return Err(Error::Shape(
            "mass and stiffness must be equal-size square matrices".into(),
        ));
    }
    let chol = mass
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("mass matrix is not positive definite".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular mass factor".into()))?;
    let a = &l_inv * stiffness * l_inv.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(a, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("eigen-solve did not converge".into()))?;
    let mut lambdas: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    lambdas.sort_by(|a, b| a.total_cmp(b));
    if lambdas[0] <= 0.0 {
        return Err(Error::Numeric(format!(
            "stiffness matrix is not positive definite (eigenvalue {})",
            lambdas[0]
        )));
    }
    Ok(lambdas
        .into_iter()
        .map(|l| l.sqrt() / (2.0 * std::f64::consts::PI))
        .collect())
}

/// Newmark-β integrator with γ = 1/2, β = 1/4 for `M ü + C u̇ + K u = p(t)`.
#[derive(Debug, Clone)]
pub struct Newmark {
    n: usize,
    dt: f64,
    mass: Vec<f64>,
    damping: Vec<f64>,
    eff_inv: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    a: Vec<f64>,
    scratch: Vec<f64>,
}

const GAMMA: f64 = 0.5;
const BETA: f64 = 0.25;

fn matvec(m: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = m[i * n..(i + 1) * n]
            .iter()
            .zip(x)
            .map(|(a, b)| a * b)
            .sum();
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl Newmark {
    /// Starts from displacement `u0` and velocity `v0`; the initial
    /// acceleration satisfies the equation of motion under load `p0`.
    pub fn new(sys: &SystemMatrices, dt: f64, u0: &[f64], v0: &[f64], p0: &[f64]) -> Result<Self> {
        let n = sys.mass.nrows();
        if u0.len() != n || v0.len() != n || p0.len() != n {
            return Err(Error::Shape(
                "initial state length differs from system size".into(),
            ));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter("time step must be > 0".into()));
        }
        let eff = &sys.stiffness
            + &sys.damping * (GAMMA / (BETA * dt))
            + &sys.mass * (1.0 / (BETA * dt * dt));
        let eff_inv = eff
            .cholesky()
            .ok_or_else(|| Error::Numeric("effective stiffness is not positive definite".into()))?
            .inverse();
        let rhs = DVector::from_column_slice(p0)
            - &sys.damping * DVector::from_column_slice(v0)
            - &sys.stiffness * DVector::from_column_slice(u0);
        let a0 = sys
            .mass
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numeric("singular mass matrix".into()))?;
        Ok(Newmark {
            n,
            dt,
            mass: row_major(&sys.mass),
            damping: row_major(&sys.damping),
            eff_inv: row_major(&eff_inv),
            u: u0.to_vec(),
            v: v0.to_vec(),
            a: a0.as_slice().to_vec(),
            scratch: vec![0.0; 3 * n],
        })
    }

    /// Advances one step to the time where the load equals `p_next`.
    pub fn step(&mut self, p_next: &[f64]) {
        let n = self.n;
        let h = self.dt;
        let (c1, c2, c3) = (
            1.0 / (BETA * h * h),
            1.0 / (BETA * h),
            1.0 / (2.0 * BETA) - 1.0,
        );
        let (c4, c5, c6) = (
            GAMMA / (BETA * h),
            GAMMA / BETA - 1.0,
            h * (GAMMA / (2.0 * BETA) - 1.0),
        );
        let (xm, rest) = self.scratch.split_at_mut(n);
        let (xc, rhs) = rest.split_at_mut(n);
        for i in 0..n {
            xm[i] = c1 * self.u[i] + c2 * self.v[i] + c3 * self.a[i];
            xc[i] = c4 * self.u[i] + c5 * self.v[i] + c6 * self.a[i];
        }
        let mut tmp = vec![0.0; n];
        matvec(&self.mass, xm, rhs);
        matvec(&self.damping, xc, &mut tmp);
        for i in 0..n {
            rhs[i] += tmp[i] + p_next[i];
        }
        matvec(&self.eff_inv, rhs, &mut tmp);
        for i in 0..n {
            let a_new = c1 * (tmp[i] - self.u[i]) - c2 * self.v[i] - c3 * self.a[i];
            self.v[i] += h * ((1.0 - GAMMA) * self.a[i] + GAMMA * a_new);
            self.a[i] = a_new;
            self.u[i] = tmp[i];
        }
    }

    pub fn displacement(&self) -> &[f64] {
        &self.u
    }

    pub fn velocity(&self) -> &[f64] {
        &self.v
    }

    pub fn acceleration(&self) -> &[f64] {
        &self.a
    }
}

/// Absolute floor accelerations under white-noise ground acceleration
/// `a_g`, starting at rest. Draws `2 * ceil(samples / 2)` uniforms from the
/// excitation stream of `excitation.seed`.
pub fn simulate(
    model: &ShearModel,
    damage: Option<&DamageSpec>,
    excitation: &ExcitationSpec,
) -> Result<Recording> {
    let samples = excitation.samples()?;
    let sys = assemble(model, damage)?;
    let n = model.n_dof();
    let mut ground = vec![0.0; samples];
    Rng::with_stream(excitation.seed, stream::EXCITATION).fill_normal(
        &mut ground,
        0.0,
        excitation.noise_std,
    );

    // p = -M·1·a_g
    let influence: Vec<f64> = (0..n).map(|i| -sys.mass.row(i).sum()).collect();
    let load = |ag: f64| -> Vec<f64> { influence.iter().map(|m| m * ag).collect() };
    let sub = excitation.substeps;
    let dt = 1.0 / (excitation.fs * sub as f64);
    let zeros = vec![0.0; n];
    let mut nm = Newmark::new(&sys, dt, &zeros, &zeros, &load(ground[0]))?;

    let mut channels = vec![Vec::with_capacity(samples); n];
    for (c, ch) in channels.iter_mut().enumerate() {
        ch.push(nm.acceleration()[c] + ground[0]);
    }
    let mut p = vec![0.0; n];
    for k in 1..samples {
        let (g0, g1) = (ground[k - 1], ground[k]);
        for s in 1..=sub {
            let ag = g0 + (g1 - g0) * s as f64 / sub as f64;
            for (pi, m) in p.iter_mut().zip(&influence) {
                *pi = m * ag;
            }
            nm.step(&p);
        }
        for (c, ch) in channels.iter_mut().enumerate() {
            let v = nm.acceleration()[c] + g1;
            if !v.is_finite() {
                return Err(Error::Instability(format!(
                    "non-finite acceleration at sample {k}, channel {c}"
                )));
            }
            ch.push(v);
        }
    }
    Recording::new(
        channels,
        RecordingMeta {
            damaged: damage.map(|d| d.damaged_elements()).unwrap_or_default(),
            reduction: damage
                .and_then(|d| d.elements.first())
                .map_or(0.0, |d| d.reduction),
            fs: excitation.fs,
            seed: excitation.seed,
            ..RecordingMeta::default()
        },
    )
}

/// Adds zero-mean Gaussian noise to every channel at the given SNR
/// (`noise variance = signal power / 10^(snr_db / 10)`). An infinite SNR is
/// the identity. Noise is drawn channel by channel from the noise stream of
/// `seed`.
pub fn add_awgn(recording: &Recording, snr_db: f64, seed: u64) -> Result<Recording> {
    if snr_db == f64::INFINITY {
        return Ok(recording.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidParameter(format!("invalid SNR {snr_db} dB")));
    }
    let mut rng = Rng::with_stream(seed, stream::NOISE);
    let mut channels = Vec::with_capacity(recording.channel_count());
    for (c, ch) in recording.channels().iter().enumerate() {
        let power = ch.iter().map(|v| v * v).sum::<f64>() / ch.len() as f64;
        if power == 0.0 {
            return Err(Error::DegenerateInput(format!(
                "channel {c} has zero power"
            )));
        }
        let std = (power / 10f64.powf(snr_db / 10.0)).sqrt();
        let mut noise = vec![0.0; ch.len()];
        rng.fill_normal(&mut noise, 0.0, std);
        channels.push(ch.iter().zip(&noise).map(|(s, w)| s + w).collect());
    }
    let mut meta = recording.meta.clone();
    meta.snr_db = Some(snr_db);
    Recording::new(channels, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn single_dof_matrices() {
        let sys = assemble(&ShearModel::uniform(1, 1.0, 1.0, 0.02), None).unwrap();
        assert_eq!(sys.mass[(0, 0)], 1.0);
        assert_eq!(sys.stiffness[(0, 0)], 1.0);
    }

    #[test]
    fn two_dof_stiffness() {
        let k = 7.0;
        let sys = assemble(&ShearModel::uniform(2, 1.0, k, 0.02), None).unwrap();
        assert_eq!(
            sys.stiffness,
            DMatrix::from_row_slice(2, 2, &[2.0 * k, -k, -k, k])
        );
    }

    #[test]
    fn damage_scales_element_entries() {
        let model = ShearModel::uniform(3, 1.0, 10.0, 0.02);
        let sys = assemble(&model, Some(&DamageSpec::uniform(&[1], 0.2))).unwrap();
        let expect = [18.0, -8.0, 0.0, -8.0, 18.0, -10.0, 0.0, -10.0, 10.0];
        for (a, b) in sys.stiffness.transpose().as_slice().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_damage_and_model() {
        let model = ShearModel::uniform(3, 1.0, 10.0, 0.02);
        assert!(assemble(&model, Some(&DamageSpec::uniform(&[3], 0.2))).is_err());
        assert!(assemble(&model, Some(&DamageSpec::uniform(&[0], 1.0))).is_err());
        let mut bad = model.clone();
        bad.masses[1] = 0.0;
        assert!(matches!(assemble(&bad, None), Err(Error::Model(_))));
    }

    #[test]
    fn rayleigh_fit_hits_anchor_ratios() {
        let model = ShearModel {
            masses: vec![1.0; 4],
            stiffnesses: vec![1e4; 4],
            damping_ratios: [0.02, 0.05],
        };
        let sys = assemble(&model, None).unwrap();
        let f = modal_frequencies(&sys.mass, &sys.stiffness).unwrap();
        // ζ(ω) = a0/(2ω) + a1 ω/2 where C = a0 M + a1 K and M = I
        let w: Vec<f64> = f.iter().map(|f| 2.0 * PI * f).collect();
        let a1 = (sys.damping[(0, 1)]) / (sys.stiffness[(0, 1)]);
        let a0 = sys.damping[(0, 0)] - a1 * sys.stiffness[(0, 0)];
        let zeta = |w: f64| a0 / (2.0 * w) + a1 * w / 2.0;
        assert!((zeta(w[0]) - 0.02).abs() < 1e-12);
        assert!((zeta(w[3]) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn one_dof_frequency() {
        let k = (2.0 * PI * 4.0f64).powi(2);
        let f = modal_frequencies(
            &DMatrix::from_element(1, 1, 1.0),
            &DMatrix::from_element(1, 1, k),
        )
        .unwrap();
        assert!(rel(f[0], 4.0) < 1e-9);
    }

    #[test]
    fn two_dof_closed_form() {
        let sys = assemble(&ShearModel::uniform(2, 1.0, 1.0, 0.02), None).unwrap();
        let f = modal_frequencies(&sys.mass, &sys.stiffness).unwrap();
        let lo = ((3.0 - 5f64.sqrt()) / 2.0).sqrt() / (2.0 * PI);
        let hi = ((3.0 + 5f64.sqrt()) / 2.0).sqrt() / (2.0 * PI);
        assert!(rel(f[0], lo) < 1e-9 && rel(f[1], hi) < 1e-9, "{f:?}");
        assert!((f[0] - 0.09836).abs() < 1e-5 && (f[1] - 0.25751).abs() < 1e-5);
    }

    #[test]
    fn zero_excitation_gives_silence() {
        let model = ShearModel::uniform(3, 1.0, 1e4, 0.02);
        let exc = ExcitationSpec {
            fs: 256.0,
            duration: 2.0,
            noise_std: 0.0,
            seed: 1,
            substeps: 2,
        };
        let rec = simulate(&model, None, &exc).unwrap();
        assert_eq!(rec.channel_count(), 3);
        assert_eq!(rec.samples(), 512);
        assert!(rec.channels().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn simulation_is_deterministic() {
        let model = ShearModel::uniform(4, 1.0, 4e5, 0.02);
        let exc = ExcitationSpec {
            fs: 1024.0,
            duration: 1.0,
            noise_std: 1.0,
            seed: 77,
            substeps: 4,
        };
        let a = simulate(&model, Some(&DamageSpec::uniform(&[2], 0.2)), &exc).unwrap();
        let b = simulate(&model, Some(&DamageSpec::uniform(&[2], 0.2)), &exc).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.meta.damaged, vec![2]);
    }

    #[test]
    fn non_integer_sample_count() {
        let exc = ExcitationSpec {
            fs: 1000.0,
            duration: 0.0005,
            noise_std: 1.0,
            seed: 0,
            substeps: 1,
        };
        assert!(exc.samples().is_err());
    }

    #[test]
    fn undamped_free_vibration_conserves_energy() {
        let (m, k) = (2.0, 800.0);
        let sys = SystemMatrices {
            mass: DMatrix::from_element(1, 1, m),
            damping: DMatrix::zeros(1, 1),
            stiffness: DMatrix::from_element(1, 1, k),
        };
        let mut nm = Newmark::new(&sys, 1e-3, &[0.01], &[0.3], &[0.0]).unwrap();
        let energy = |nm: &Newmark| {
            0.5 * k * nm.displacement()[0].powi(2) + 0.5 * m * nm.velocity()[0].powi(2)
        };
        let e0 = energy(&nm);
        for _ in 0..10_000 {
            nm.step(&[0.0]);
            assert!(rel(energy(&nm), e0) < 1e-3);
        }
    }

    #[test]
    fn damage_lowers_frequencies() {
        let model = ShearModel::uniform(10, 1.0, 4e5, 0.02);
        let base = assemble(&model, None).unwrap();
        let f0 = modal_frequencies(&base.mass, &base.stiffness).unwrap();
        let mut cases: Vec<Vec<usize>> = (0..10).map(|i| vec![i]).collect();
        cases.push(vec![1, 6]);
        cases.push(vec![3, 8]);
        for d in cases {
            let sys = assemble(&model, Some(&DamageSpec::uniform(&d, 0.2))).unwrap();
            let f = modal_frequencies(&sys.mass, &sys.stiffness).unwrap();
            assert!(
                f.iter().zip(&f0).all(|(a, b)| *a <= b * (1.0 + 1e-12)),
                "{d:?}"
            );
            assert!(
                f.iter().zip(&f0).any(|(a, b)| *a < b * (1.0 - 1e-6)),
                "{d:?}"
            );
        }
    }

    #[test]
    fn response_spectrum_peaks_at_natural_frequency() {
        use rustfft::{num_complex::Complex, FftPlanner};
        let k = (2.0 * PI * 4.0f64).powi(2);
        let model = ShearModel::uniform(1, 1.0, k, 0.01);
        let exc = ExcitationSpec {
            fs: 64.0,
            duration: 1024.0,
            noise_std: 1.0,
            seed: 11,
            substeps: 4,
        };
        let rec = simulate(&model, None, &exc).unwrap();
        let sys = assemble(&model, None).unwrap();
        let fn0 = modal_frequencies(&sys.mass, &sys.stiffness).unwrap()[0];

        // Welch average of periodograms over non-overlapping 1024-sample segments
        let seg = 1024;
        let fft = FftPlanner::new().plan_fft_forward(seg);
        let mut psd = vec![0.0; seg / 2 + 1];
        for chunk in rec.channels()[0].chunks_exact(seg) {
            let mut buf: Vec<Complex<f64>> = chunk.iter().map(|&v| Complex::new(v, 0.0)).collect();
            fft.process(&mut buf);
            for (p, c) in psd.iter_mut().zip(&buf) {
                *p += c.norm_sqr();
            }
        }
        let peak = (1..psd.len())
            .max_by(|&a, &b| psd[a].total_cmp(&psd[b]))
            .unwrap();
        let bin = exc.fs / seg as f64;
        assert!(
            (peak as f64 - fn0 / bin).abs() <= 2.0,
            "peak bin {peak}, expected {}",
            fn0 / bin
        );
    }

    fn sine_recording(n: usize) -> Recording {
        let ch: Vec<f64> = (0..n)
            .map(|k| 2f64.sqrt() * (0.05 * k as f64).sin())
            .collect();
        Recording::new(
            vec![ch],
            RecordingMeta {
                fs: 1024.0,
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn noise_power(clean: &Recording, noisy: &Recording) -> f64 {
        let (a, b) = (&clean.channels()[0], &noisy.channels()[0]);
        a.iter().zip(b).map(|(x, y)| (y - x).powi(2)).sum::<f64>() / a.len() as f64
    }

    #[test]
    fn awgn_infinite_snr_is_identity() {
        let rec = sine_recording(1000);
        assert_eq!(add_awgn(&rec, f64::INFINITY, 1).unwrap(), rec);
    }

    #[test]
    fn awgn_zero_db_on_unit_power_sine() {
        // variance estimator over 2^17 samples has relative std sqrt(2/n) ~ 0.4 %
        let rec = sine_recording(1 << 17);
        let noisy = add_awgn(&rec, 0.0, 3).unwrap();
        assert!(rel(noise_power(&rec, &noisy), 1.0) < 0.05);
        assert_eq!(noisy.meta.snr_db, Some(0.0));
    }

    #[test]
    fn awgn_twenty_db() {
        let rec = sine_recording(1 << 17);
        let p = rec.channels()[0].iter().map(|v| v * v).sum::<f64>() / (1 << 17) as f64;
        let noisy = add_awgn(&rec, 20.0, 4).unwrap();
        assert!(rel(noise_power(&rec, &noisy), 0.01 * p) < 0.05);
    }

    #[test]
    fn awgn_silent_channel() {
        let rec = Recording::new(
            vec![vec![0.0; 10]],
            RecordingMeta {
                fs: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(matches!(
            add_awgn(&rec, 10.0, 0),
            Err(Error::DegenerateInput(_))
        ));
    }
}
