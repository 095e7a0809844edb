//! Benchmark plants with their stabilizing output-feedback controllers.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use sfe_core::linalg;
use sfe_core::lti::{standard_normal, stream_rng, NoiseSource, STREAM_REFERENCE};
use sfe_core::{Error, IoData, Matrix, Result, StateSpaceModel, Vector};

/// Static output feedback `u(k) = −K y(k) + η(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackController {
    pub gain: Matrix,
}

impl FeedbackController {
    /// Checks the gain against the plant and that the loop is stable.
    pub fn new(model: &StateSpaceModel, gain: Matrix) -> Result<Self> {
        if gain.shape() != (model.inputs(), model.outputs()) {
            return Err(Error::validation(format!(
                "controller gain is {}x{}, expected {}x{}",
                gain.nrows(),
                gain.ncols(),
                model.inputs(),
                model.outputs()
            )));
        }
        let ctrl = Self { gain };
        let rho = linalg::spectral_radius(&ctrl.closed_loop_a(model)?);
        if rho >= 1.0 {
            return Err(Error::validation(format!(
                "controller does not stabilize the plant (closed-loop spectral radius {rho:.4})"
            )));
        }
        Ok(ctrl)
    }

    /// `(I + K D)⁻¹`, the algebraic loop factor.
    fn loop_factor(&self, model: &StateSpaceModel) -> Result<Matrix> {
        let n_u = model.inputs();
        (Matrix::identity(n_u, n_u) + &self.gain * &model.d)
            .try_inverse()
            .ok_or_else(|| Error::validation("controller forms a singular algebraic loop"))
    }

    pub fn closed_loop_a(&self, model: &StateSpaceModel) -> Result<Matrix> {
        let m = self.loop_factor(model)?;
        Ok(&model.a - &model.b * m * &self.gain * &model.c)
    }
}

/// Plant, controller and descriptive metadata.
#[derive(Debug, Clone)]
pub struct Plant {
    pub name: String,
    pub model: StateSpaceModel,
    pub controller: FeedbackController,
    /// Sampling period in seconds; informational only.
    pub sample_time: Option<f64>,
}

pub const REGISTRY: &[&str] = &["vtol"];

/// Looks up a registered plant by name or loads a plant file.
pub fn load_plant(name_or_path: &str) -> Result<Plant> {
    match name_or_path {
        "vtol" => vtol(),
        other => {
            let path = Path::new(other);
            if path.exists() {
                load_plant_file(path)
            } else {
                Err(Error::validation(format!(
                    "unknown plant {other:?}; registered plants: {}, or give a plant file",
                    REGISTRY.join(", ")
                )))
            }
        }
    }
}

/// Unstable four-state helicopter-like plant, 0.5 s sampling, all states
/// measured, sensor faults on the first two outputs.
///
/// Linearized longitudinal dynamics of the usual VTOL benchmark structure,
/// discretized with zero-order hold. The open loop has an unstable complex
/// pair (|λ| ≈ 1.148); the printed controller feeds back the third and fourth
/// measurements and yields a closed-loop spectral radius of about 0.81.
pub fn vtol() -> Result<Plant> {
    let a = Matrix::from_row_slice(
        4,
        4,
        &[
            0.981302, 0.008254, -0.045395, -0.245926, //
            0.011728, 0.581257, -0.389781, -1.666247, //
            0.045718, 0.127367, 0.823006, 0.480330, //
            0.011697, 0.035780, 0.443325, 1.136131,
        ],
    );
    let b = Matrix::from_row_slice(
        4,
        2,
        &[
            0.266419, 0.036467, //
            1.762912, -3.266435, //
            -2.315157, 1.720942, //
            -0.608276, 0.466041,
        ],
    );
    let gain = Matrix::from_row_slice(2, 4, &[0.0, 0.0, -0.4, 0.0, 0.0, 0.0, -0.35, 0.25]);
    let model = StateSpaceModel::with_sensor_faults(
        a,
        b,
        Matrix::identity(4, 4),
        Matrix::zeros(4, 2),
        Matrix::identity(4, 4),
        Matrix::identity(4, 4) * 1e-4,
        Matrix::identity(4, 4) * 0.01,
        &[0, 1],
    )?;
    let controller = FeedbackController::new(&model, gain)?;
    Ok(Plant {
        name: "vtol".into(),
        model,
        controller,
        sample_time: Some(0.5),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlantFile {
    name: Option<String>,
    sample_time: Option<f64>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    d: Option<Vec<Vec<f64>>>,
    f: Option<Vec<Vec<f64>>>,
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    fault_sensors: Vec<usize>,
    controller: Vec<Vec<f64>>,
}

fn rows_to_matrix(name: &str, rows: &[Vec<f64>], cols_if_empty: usize) -> Result<Matrix> {
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, cols_if_empty));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::validation(format!("matrix {name} has ragged rows")));
    }
    Ok(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Loads a plant description from a TOML file with matrices given as
/// arrays of rows.
pub fn load_plant_file(path: &Path) -> Result<Plant> {
    let text = std::fs::read_to_string(path)?;
    let file: PlantFile =
        toml::from_str(&text).map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
    let a = rows_to_matrix("a", &file.a, 0)?;
    let n = a.nrows();
    let b = rows_to_matrix("b", &file.b, 0)?;
    let c = rows_to_matrix("c", &file.c, n)?;
    let d = match &file.d {
        Some(d) => rows_to_matrix("d", d, b.ncols())?,
        None => Matrix::zeros(c.nrows(), b.ncols()),
    };
    let f = match &file.f {
        Some(f) => rows_to_matrix("f", f, 0)?,
        None => Matrix::identity(n, n),
    };
    let q = rows_to_matrix("q", &file.q, 0)?;
    let r = rows_to_matrix("r", &file.r, 0)?;
    let model = StateSpaceModel::with_sensor_faults(a, b, c, d, f, q, r, &file.fault_sensors)?;
    let gain = rows_to_matrix("controller", &file.controller, model.outputs())?;
    let controller = FeedbackController::new(&model, gain)?;
    Ok(Plant {
        name: file.name.unwrap_or_else(|| path.display().to_string()),
        model,
        controller,
        sample_time: file.sample_time,
    })
}

impl Plant {
    /// Sensors affected by faults (from the columns of `G`).
    pub fn fault_sensors(&self) -> Vec<usize> {
        (0..self.model.faults())
            .map(|j| self.model.g.column(j).iamax())
            .collect()
    }

    /// Same plant with `Q = q·I`, `R = r·I`.
    pub fn with_noise(&self, q: f64, r: f64) -> Result<Self> {
        let mut out = self.clone();
        let (n_w, n_y) = (self.model.noise_inputs(), self.model.outputs());
        out.model.q = Matrix::identity(n_w, n_w) * q;
        out.model.r = Matrix::identity(n_y, n_y) * r;
        StateSpaceModel::new(
            out.model.a.clone(),
            out.model.b.clone(),
            out.model.c.clone(),
            out.model.d.clone(),
            out.model.e.clone(),
            out.model.f.clone(),
            out.model.g.clone(),
            out.model.q.clone(),
            out.model.r.clone(),
        )?;
        Ok(out)
    }

    /// Closed-loop run with reference `eta` and faults `f` (one sample per
    /// row), noise from `seed`, zero initial state.
    pub fn simulate_closed_loop(&self, eta: &Matrix, f: &Matrix, seed: u64) -> Result<IoData> {
        let model = &self.model;
        let n = eta.nrows();
        if eta.ncols() != model.inputs() || f.shape() != (n, model.faults()) {
            return Err(Error::validation(
                "reference or fault series has the wrong shape",
            ));
        }
        let m = self.controller.loop_factor(model)?;
        let k = &self.controller.gain;
        let mut noise = NoiseSource::new(model, seed)?;
        let mut x = Vector::zeros(model.states());
        let mut u = Matrix::zeros(n, model.inputs());
        let mut y = Matrix::zeros(n, model.outputs());
        for t in 0..n {
            let (w, v) = noise.sample();
            let fk = f.row(t).transpose();
            let eta_k = eta.row(t).transpose();
            // y = Cx + Du + Gf + v, u = −K y + η
            let y_free: DVector<f64> = &model.c * &x + &model.g * &fk + v;
            let uk = &m * (eta_k - k * &y_free);
            let yk = y_free + &model.d * &uk;
            x = &model.a * &x + &model.b * &uk + &model.e * &fk + &model.f * w;
            u.row_mut(t).copy_from(&uk.transpose());
            y.row_mut(t).copy_from(&yk.transpose());
        }
        IoData::new(u, y)
    }
}

/// White reference `η(k) ~ N(0, diag(variances))`.
pub fn white_reference(n: usize, variances: &[f64], seed: u64) -> Result<Matrix> {
    if variances.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::validation(
            "reference variances must be non-negative",
        ));
    }
    let mut rng = stream_rng(seed, STREAM_REFERENCE);
    let sd: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
    let mut eta = DMatrix::zeros(n, sd.len());
    for t in 0..n {
        let z = standard_normal::<f64>(&mut rng, sd.len());
        for j in 0..sd.len() {
            eta[(t, j)] = sd[j] * z[j];
        }
    }
    Ok(eta)
}

/// Fault-free closed-loop identification experiment of `n` samples.
pub fn collect_identification_data(
    plant: &Plant,
    n: usize,
    reference_var: &[f64],
    seed: u64,
) -> Result<IoData> {
    if reference_var.len() != plant.model.inputs() {
        return Err(Error::validation(format!(
            "reference covariance has {} entries, plant has {} inputs",
            reference_var.len(),
            plant.model.inputs()
        )));
    }
    let eta = white_reference(n, reference_var, seed)?;
    let f = Matrix::zeros(n, plant.model.faults());
    plant.simulate_closed_loop(&eta, &f, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registered_plant_is_open_loop_unstable_and_closed_loop_stable() {
        let p = vtol().unwrap();
        assert!(linalg::spectral_radius(&p.model.a) > 1.0);
        let rho = linalg::spectral_radius(&p.controller.closed_loop_a(&p.model).unwrap());
        assert!(rho < 0.9, "{rho}");
        assert_eq!(p.fault_sensors(), vec![0, 1]);
    }

    #[test]
    fn destabilizing_gain_is_rejected() {
        let p = vtol().unwrap();
        let err = FeedbackController::new(&p.model, Matrix::zeros(2, 4)).unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn quiet_loop_stays_at_rest() {
        let p = vtol().unwrap().with_noise(0.0, 0.0).unwrap();
        let data = collect_identification_data(&p, 50, &[0.0, 0.0], 3).unwrap();
        assert!(data.y.amax() == 0.0 && data.u.amax() == 0.0);
    }

    #[test]
    fn identification_data_is_seeded() {
        let p = vtol().unwrap();
        let a = collect_identification_data(&p, 100, &[1.0, 1.0], 7).unwrap();
        let b = collect_identification_data(&p, 100, &[1.0, 1.0], 7).unwrap();
        let c = collect_identification_data(&p, 100, &[1.0, 1.0], 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn closed_loop_matches_state_space_oracle() {
        // noise-free loop equals the closed-loop system driven by η
        let p = vtol().unwrap().with_noise(0.0, 0.0).unwrap();
        let eta = white_reference(40, &[1.0, 1.0], 1).unwrap();
        let data = p
            .simulate_closed_loop(&eta, &Matrix::zeros(40, 2), 0)
            .unwrap();
        let acl = p.controller.closed_loop_a(&p.model).unwrap();
        let mut x = Vector::zeros(4);
        for t in 0..40 {
            let y = &p.model.c * &x;
            assert!((y.transpose() - data.y.row(t)).amax() < 1e-12);
            x = &acl * &x + &p.model.b * eta.row(t).transpose();
        }
    }

    #[test]
    fn plant_file_round_trip() {
        let dir = std::env::temp_dir().join(format!("sfe-plant-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("p.toml");
        std::fs::write(
            &path,
            "name = \"toy\"\na = [[1.2]]\nb = [[1.0]]\nc = [[1.0], [0.5]]\nq = [[0.01]]\nr = [[0.1, 0.0], [0.0, 0.1]]\nfault_sensors = [1]\ncontroller = [[0.5, 0.4]]\n",
        )
        .unwrap();
        let p = load_plant(path.to_str().unwrap()).unwrap();
        assert_eq!(p.name, "toy");
        assert_eq!(p.fault_sensors(), vec![1]);
        assert!(load_plant("nope").unwrap_err().is_validation());
        std::fs::remove_dir_all(&dir).ok();
    }
}
