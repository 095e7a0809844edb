//! Four-way comparison on one faulty closed-loop trajectory:
//!
//! * `alg0`: reduced filter from the true predictor
//! * `alg1`: predictor realized from the identified Markov parameters, then
//!   the model-based design
//! * `alg2`: filter designed directly from the identified Markov parameters
//! * `alg3`: moving-horizon least squares from the identified Markov parameters

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sfe_core::design::{design_filter_from_xi, realize_markov};
use sfe_core::inverse::{FaultEstimationFilter, FilterParts};
use sfe_core::lti::to_predictor;
use sfe_core::mhe::{run_mhe, MheProblem};
use sfe_core::sysid::identify_xi;
use sfe_core::{
    DesignConfig, Error, IdentifiedXi, IoData, Matrix, OrderSelection, PredictorModel, Result,
    StabilizationStrategy, XiOptions,
};

use crate::plant::{collect_identification_data, Plant};
use crate::scenario::FaultScenario;
use crate::stats::{ellipse_stats, ErrorStats};

/// Identification experiment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentificationConfig {
    pub samples: usize,
    /// Diagonal of the reference covariance.
    pub reference_variance: Vec<f64>,
    #[serde(flatten)]
    pub regression: XiOptions,
}

impl Default for IdentificationConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            reference_variance: vec![1.0, 1.0],
            regression: XiOptions {
                past_horizon: 100,
                ridge: 0.0,
                feedthrough: false,
            },
        }
    }
}

/// Samples over which errors are evaluated: `start .. start + length`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub start: usize,
    pub length: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            start: 150,
            length: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MheConfig {
    pub window: usize,
    /// Dimension of the observability range estimated from Ξ.
    pub order: usize,
    /// Block columns of the Hankel matrix used for that estimate.
    pub hankel_cols: usize,
}

impl Default for MheConfig {
    fn default() -> Self {
        Self {
            window: 100,
            order: 4,
            hankel_cols: 20,
        }
    }
}

/// `Q = q·I`, `R = r·I` replacing the plant's noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseOverride {
    pub q: f64,
    pub r: f64,
}

/// Full comparison configuration (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Registered plant name or plant file.
    pub plant: String,
    pub seed: u64,
    pub noise: Option<NoiseOverride>,
    /// Process and measurement noise in the faulty run (off: `e ≡ 0`).
    pub faulty_noise: bool,
    pub identification: IdentificationConfig,
    pub design: DesignConfig,
    pub scenario: FaultScenario,
    pub evaluation: EvaluationConfig,
    pub mhe: MheConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            plant: "vtol".into(),
            seed: 1,
            noise: None,
            faulty_noise: true,
            identification: IdentificationConfig::default(),
            design: DesignConfig {
                sensors: vec![0, 1],
                horizon: 100,
                hankel_rows: 20,
                hankel_cols: 20,
                order: OrderSelection::Fixed(4),
                stabilization: StabilizationStrategy::PolePlacement {
                    poles: vec![0.948, 0.532, 0.225, 0.141],
                },
                ..DesignConfig::default()
            },
            scenario: FaultScenario::default(),
            evaluation: EvaluationConfig::default(),
            mhe: MheConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))
    }

    /// Samples in the faulty run.
    pub fn run_length(&self) -> usize {
        self.evaluation.start + self.evaluation.length
    }

    pub fn validate(&self, plant: &Plant) -> Result<()> {
        let sensors = plant.fault_sensors();
        if self.design.sensors != sensors {
            return Err(Error::validation(format!(
                "design sensors {:?} differ from the plant's faulty sensors {:?}",
                self.design.sensors, sensors
            )));
        }
        if self.scenario.faults() != sensors.len() {
            return Err(Error::validation(
                "scenario must give one signal per faulty sensor",
            ));
        }
        if self.evaluation.length < sensors.len() + 1 {
            return Err(Error::validation("evaluation window too short"));
        }
        if self.mhe.window == 0 || self.evaluation.start + 1 < self.mhe.window {
            return Err(Error::validation(format!(
                "evaluation start {} lies inside the moving-horizon warm-up of {} samples",
                self.evaluation.start,
                self.mhe.window.saturating_sub(1)
            )));
        }
        if self.mhe.window > self.identification.regression.past_horizon + 1 {
            return Err(Error::validation(
                "moving-horizon window exceeds the identified Markov length",
            ));
        }
        self.design.validate(
            plant.model.outputs(),
            self.identification.regression.past_horizon,
        )
    }

    /// The faulty run is seeded independently of the identification run.
    pub fn faulty_seed(&self) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(1)
    }
}

pub const ALGORITHMS: [&str; 4] = ["alg0", "alg1", "alg2", "alg3"];

/// Result for one algorithm.
#[derive(Debug, Clone)]
pub struct AlgorithmResult {
    pub name: &'static str,
    /// `Err` holds the stage-tagged failure message.
    pub outcome: std::result::Result<AlgorithmRun, String>,
}

#[derive(Debug, Clone)]
pub struct AlgorithmRun {
    /// Estimates over the whole run; `None` rows during warm-up.
    pub estimates: Vec<Option<Vec<f64>>>,
    pub stats: ErrorStats,
    /// Spectral radius of the filter; `None` for the finite-window estimator.
    pub spectral_radius: Option<f64>,
    pub setup_time: Duration,
    pub run_time: Duration,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub plant: String,
    pub seed: u64,
    pub faults: Matrix,
    pub faulty_data: IoData,
    pub identification_data: IoData,
    pub xi: Option<IdentifiedXi>,
    pub evaluation: EvaluationConfig,
    pub results: Vec<AlgorithmResult>,
}

impl ExperimentReport {
    pub fn result(&self, name: &str) -> Option<&AlgorithmResult> {
        self.results.iter().find(|r| r.name == name)
    }

    /// `trace(cov)` of a successful algorithm.
    pub fn trace(&self, name: &str) -> Option<f64> {
        self.result(name)?
            .outcome
            .as_ref()
            .ok()
            .map(|r| r.stats.trace())
    }
}

/// Builds the four estimators and evaluates them on one faulty trajectory.
/// Only configuration and plant problems abort the run; algorithm failures
/// are recorded per algorithm.
pub fn run_comparison(cfg: &ExperimentConfig, plant: &Plant) -> Result<ExperimentReport> {
    let plant = match cfg.noise {
        Some(n) => plant.with_noise(n.q, n.r)?,
        None => plant.clone(),
    };
    cfg.validate(&plant)?;
    let n_f = plant.model.faults();
    let ident = &cfg.identification;
    let id_data =
        collect_identification_data(&plant, ident.samples, &ident.reference_variance, cfg.seed)?;

    let n = cfg.run_length();
    let faults = cfg.scenario.series(n, n_f)?;
    let eta = Matrix::zeros(n, plant.model.inputs());
    let faulty = if cfg.faulty_noise {
        plant.simulate_closed_loop(&eta, &faults, cfg.faulty_seed())?
    } else {
        plant
            .with_noise(0.0, 0.0)?
            .simulate_closed_loop(&eta, &faults, cfg.faulty_seed())?
    };

    let xi = identify_xi(&id_data, &ident.regression).map_err(|e| e.at("identify"));
    let eval = |estimates: Vec<Option<Vec<f64>>>| -> Result<ErrorStats> {
        let (s, len) = (cfg.evaluation.start, cfg.evaluation.length);
        let mut err = Matrix::zeros(len, n_f);
        for t in 0..len {
            let est = estimates[s + t].as_ref().ok_or_else(|| {
                Error::validation("estimate missing inside the evaluation window")
            })?;
            for j in 0..n_f {
                err[(t, j)] = est[j] - faults[(s + t, j)];
            }
        }
        ellipse_stats(&err).map_err(|e| e.at("statistics"))
    };
    let filter_run = |build: &dyn Fn() -> Result<FaultEstimationFilter<f64>>| -> std::result::Result<AlgorithmRun, String> {
        let t0 = Instant::now();
        let mut filter = build().map_err(|e| e.to_string())?;
        let setup_time = t0.elapsed();
        let t1 = Instant::now();
        let est = filter.run(&faulty, None).map_err(|e| e.to_string())?;
        let run_time = t1.elapsed();
        let estimates: Vec<Option<Vec<f64>>> =
            (0..est.nrows()).map(|k| Some(est.row(k).iter().copied().collect())).collect();
        let stats = eval(estimates.clone()).map_err(|e| e.to_string())?;
        Ok(AlgorithmRun { estimates, stats, spectral_radius: Some(filter.spectral_radius()), setup_time, run_time })
    };

    let strategy = &cfg.design.stabilization;
    let sensors = &cfg.design.sensors;
    let mut results = Vec::with_capacity(4);
    results.push(AlgorithmResult {
        name: "alg0",
        outcome: filter_run(&|| {
            let pred = to_predictor(&plant.model).map_err(|e| e.at("predictor"))?;
            model_based_filter(&pred, strategy)
        }),
    });
    let xi_err = |xi: &Result<IdentifiedXi>| xi.as_ref().err().map(|e| e.to_string());
    results.push(AlgorithmResult {
        name: "alg1",
        outcome: match &xi {
            Ok(xi) => filter_run(&|| {
                let pred =
                    realize_predictor(xi, sensors, &cfg.design).map_err(|e| e.at("realize"))?;
                model_based_filter(&pred, strategy)
            }),
            Err(_) => Err(xi_err(&xi).unwrap_or_default()),
        },
    });
    results.push(AlgorithmResult {
        name: "alg2",
        outcome: match &xi {
            Ok(xi) => filter_run(&|| Ok(design_filter_from_xi(xi, &cfg.design)?.filter)),
            Err(_) => Err(xi_err(&xi).unwrap_or_default()),
        },
    });
    results.push(AlgorithmResult {
        name: "alg3",
        outcome: match &xi {
            Ok(xi) => (|| -> std::result::Result<AlgorithmRun, String> {
                let t0 = Instant::now();
                let prob = MheProblem::from_xi(
                    xi,
                    sensors,
                    cfg.mhe.window,
                    cfg.mhe.order,
                    cfg.mhe.hankel_cols,
                )
                .map_err(|e| e.at("mhe").to_string())?;
                let setup_time = t0.elapsed();
                let t1 = Instant::now();
                let r = xi
                    .residuals(&faulty)
                    .map_err(|e| e.at("residuals").to_string())?;
                let est = run_mhe(&prob, &r).map_err(|e| e.at("mhe").to_string())?;
                let run_time = t1.elapsed();
                let estimates: Vec<Option<Vec<f64>>> = est
                    .into_iter()
                    .map(|f| f.map(|v| v.iter().copied().collect()))
                    .collect();
                let stats = eval(estimates.clone()).map_err(|e| e.to_string())?;
                Ok(AlgorithmRun {
                    estimates,
                    stats,
                    spectral_radius: None,
                    setup_time,
                    run_time,
                })
            })(),
            Err(_) => Err(xi_err(&xi).unwrap_or_default()),
        },
    });

    Ok(ExperimentReport {
        plant: plant.name.clone(),
        seed: cfg.seed,
        faults,
        faulty_data: faulty,
        identification_data: id_data,
        xi: xi.ok(),
        evaluation: cfg.evaluation.clone(),
        results,
    })
}

/// Model-based reduced filter with the configured stabilization.
pub fn model_based_filter(
    pred: &PredictorModel,
    strategy: &StabilizationStrategy,
) -> Result<FaultEstimationFilter<f64>> {
    let parts = FilterParts::from_predictor(pred).map_err(|e| e.at("inverse"))?;
    let gain = parts
        .stabilizing_gain(strategy)
        .map_err(|e| e.at("stabilize"))?;
    parts.assemble(&gain).map_err(|e| e.at("assemble"))
}

/// Predictor `(Φ, B̃, K, C, D)` realized from the Markov parameters
/// `[H^u H^y]`, with the sensor-fault directions attached.
pub fn realize_predictor(
    xi: &IdentifiedXi,
    sensors: &[usize],
    cfg: &DesignConfig,
) -> Result<PredictorModel> {
    let (n_u, n_y) = (xi.inputs(), xi.outputs());
    let (sys, _) = realize_markov(&xi.io_markov(), cfg.hankel_rows, cfg.hankel_cols, cfg.order)?;
    let btilde = sys.b.columns(0, n_u).into_owned();
    let k = sys.b.columns(n_u, n_y).into_owned();
    let d = sys.d.columns(0, n_u).into_owned();
    PredictorModel::with_sensor_faults(
        sys.a,
        btilde,
        k,
        sys.c,
        d,
        xi.residual_variance.clone(),
        sensors,
    )
}
