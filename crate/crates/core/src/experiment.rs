//! Configuration-driven experiments: data simulation, posterior sampling,
//! asymptotic variances, BvM diagnostics and coverage studies, with all
//! artifacts written under one output directory.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::MatrixField;
use crate::gp::{rescale_factor, MaternConfig, MaternPrior, Problem};
use crate::lie::Algebra;
use crate::linalg::PcgOptions;
use crate::mcmc::{
    bvm_diagnostic, coverage_experiment, credible_interval, run_chain, BvmReport, ChainConfig,
    ChainRecord, CoverageReport, ForwardModel, Functional, Init, Observations, ReplicateOutput,
    ScaledPrior,
};
use crate::mesh::TriMesh;
use crate::presets::{self, Preset};
use crate::schrodinger::{GridDomain, Linearization, SchrodingerModel, ExpLink};
use crate::spectral::{
    asymptotic_variance, calibrate_n0, variance_by_duality, GalerkinNormal, SpectralConfig,
};
use crate::stats;
use crate::transport::{generate_dataset, ScatteringDataset, Scheme, StepControl};
use crate::xray_model::{flatten_matrices, mesh_functional, mesh_parameters, XrayModel};
use crate::zernike::DiskQuadrature;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Xray,
    Schrodinger,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthSpec {
    /// Built-in preset fields (stand-ins, see [`crate::presets`]).
    Preset,
    /// CSV with one row per parameter node and one column per component.
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestField {
    /// `su(2)` field with preset basis coefficients.
    Su2 { name: String, components: [Preset; 3] },
    /// Scalar bump `amplitude·(1 − |x − c|²/r²)⁴₊`.
    Bump {
        name: String,
        center: [f64; 2],
        radius: f64,
        amplitude: f64,
    },
}

impl TestField {
    pub fn name(&self) -> &str {
        match self {
            TestField::Su2 { name, .. } | TestField::Bump { name, .. } => name,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Resolution {
    /// Rings of the concentric disk mesh carrying the X-ray parameter.
    pub mesh_rings: usize,
    /// Step bound of the forward model inside the sampler.
    pub forward_h: f64,
    /// Step bound used when simulating data.
    pub data_h: f64,
    pub spectral: SpectralConfig,
    /// Step bound for the transport-based variance evaluation.
    pub variance_h: f64,
    /// Intervals per side of the Schrödinger parameter grid.
    pub schrodinger_grid: usize,
    /// Intervals per side of the grid for data and variances.
    pub schrodinger_fine_grid: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self {
            mesh_rings: 17,
            forward_h: 0.04,
            data_h: 0.01,
            spectral: SpectralConfig::default(),
            variance_h: 0.01,
            schrodinger_grid: 16,
            schrodinger_fine_grid: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoverageConfig {
    pub replications: usize,
    pub xi: f64,
    pub n: usize,
    pub mesh_rings: usize,
    /// Index into `tracked` of the functional whose interval is checked.
    pub functional: usize,
    pub chain: ChainConfig,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            replications: 50,
            xi: 0.1,
            n: 200,
            mesh_rings: 8,
            functional: 0,
            chain: ChainConfig {
                n_samples: 20_000,
                burn_in: 5_000,
                init: Init::Zero,
                ..ChainConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub truth: TruthSpec,
    /// Number of observations `N`.
    pub n: usize,
    pub sigma: f64,
    pub prior: MaternConfig,
    pub chain: ChainConfig,
    pub tracked: Vec<TestField>,
    /// Base seed; data, chain and replication seeds derive from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub resolution: Resolution,
    pub coverage: CoverageConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Xray,
            truth: TruthSpec::Preset,
            n: 600,
            sigma: 0.1,
            prior: MaternConfig::default(),
            chain: ChainConfig::default(),
            tracked: default_tracked(ModelKind::Xray),
            seed: 1,
            output_dir: PathBuf::from("out"),
            resolution: Resolution::default(),
            coverage: CoverageConfig::default(),
        }
    }
}

pub fn default_tracked(model: ModelKind) -> Vec<TestField> {
    use Preset::*;
    match model {
        ModelKind::Xray => vec![
            TestField::Su2 {
                name: "psi1".into(),
                components: [A, B, C],
            },
            TestField::Su2 {
                name: "psi2".into(),
                components: [D, E, F],
            },
            TestField::Su2 {
                name: "psi3".into(),
                components: [E, F, D],
            },
        ],
        ModelKind::Schrodinger => vec![
            TestField::Bump {
                name: "psi1".into(),
                center: [0.5, 0.5],
                radius: 0.3,
                amplitude: 1.0,
            },
            TestField::Bump {
                name: "psi2".into(),
                center: [0.35, 0.6],
                radius: 0.25,
                amplitude: 1.0,
            },
            TestField::Bump {
                name: "psi3".into(),
                center: [0.65, 0.35],
                radius: 0.25,
                amplitude: 1.0,
            },
        ],
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    /// Preset configuration for the given model.
    pub fn for_model(model: ModelKind) -> Self {
        Self {
            model,
            tracked: default_tracked(model),
            ..Self::default()
        }
    }

    /// Reads a JSON config; omitted fields take their defaults, and omitted
    /// test fields default to those of the chosen model.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| config_err(format!("invalid config {}: {e}", path.display())))?;
        let has_tracked = value.get("tracked").is_some();
        let mut cfg: Self = serde_json::from_value(value)
            .map_err(|e| config_err(format!("invalid config {}: {e}", path.display())))?;
        if !has_tracked {
            cfg.tracked = default_tracked(cfg.model);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(config_err("n must be at least 1"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(config_err("sigma must be positive"));
        }
        if self.tracked.is_empty() {
            return Err(config_err("at least one tracked test field is required"));
        }
        self.prior.validate().map_err(|e| config_err(e.to_string()))?;
        self.chain.validate().map_err(|e| config_err(e.to_string()))?;
        if let TruthSpec::File { path } = &self.truth {
            if !path.exists() {
                return Err(config_err(format!("truth file {} does not exist", path.display())));
            }
        }
        for t in &self.tracked {
            match (self.model, t) {
                (ModelKind::Xray, TestField::Bump { .. }) => {
                    return Err(config_err("X-ray test fields must be su(2) fields"))
                }
                (ModelKind::Schrodinger, TestField::Su2 { .. }) => {
                    return Err(config_err("Schrödinger test fields must be scalar bumps"))
                }
                _ => {}
            }
        }
        let r = &self.resolution;
        if r.mesh_rings == 0 || !(r.forward_h > 0.0) || !(r.data_h > 0.0) || !(r.variance_h > 0.0) {
            return Err(config_err("resolution parameters must be positive"));
        }
        if r.schrodinger_grid < 2 || r.schrodinger_fine_grid < 2 {
            return Err(config_err("Schrödinger grids need at least two intervals"));
        }
        Ok(())
    }

    fn validate_coverage(&self) -> Result<()> {
        let c = &self.coverage;
        if c.replications < 20 {
            return Err(config_err("coverage needs at least 20 replications"));
        }
        if !(c.xi > 0.0 && c.xi < 1.0) {
            return Err(config_err("xi must lie in (0, 1)"));
        }
        if c.n == 0 || c.mesh_rings == 0 {
            return Err(config_err("coverage n and mesh_rings must be positive"));
        }
        if c.functional >= self.tracked.len() {
            return Err(config_err("coverage functional index out of range"));
        }
        c.chain.validate().map_err(|e| config_err(e.to_string()))
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn data_seed(&self) -> u64 {
        self.seed
    }

    pub fn chain_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    fn alpha(&self) -> f64 {
        self.prior.alpha(2)
    }

    fn problem(&self) -> Problem {
        match self.model {
            ModelKind::Xray => Problem::Xray,
            ModelKind::Schrodinger => Problem::Schrodinger { dim: 2 },
        }
    }
}

/// Stamp written next to every artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub truth: String,
}

fn truth_tag(cfg: &ExperimentConfig) -> String {
    match &cfg.truth {
        TruthSpec::Preset => "preset stand-in fields".into(),
        TruthSpec::File { path } => format!("file {}", path.display()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn stamp(cfg: &ExperimentConfig, dir: &Path, command: &str) -> Result<()> {
    write_json(&dir.join("config.json"), cfg)?;
    write_json(
        &dir.join("provenance.json"),
        &Provenance {
            command: command.into(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            version: VERSION.into(),
            truth: truth_tag(cfg),
        },
    )
}

/// Observations of the Schrödinger model at random design points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchrodingerDataset {
    pub points: Vec<[f64; 2]>,
    pub values: Vec<f64>,
    pub sigma: f64,
    pub truth_tag: String,
}

pub enum Dataset {
    Xray(ScatteringDataset),
    Schrodinger(SchrodingerDataset),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Xray(d) => d.len(),
            Dataset::Schrodinger(d) => d.points.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        match self {
            Dataset::Xray(d) => d.write_json(BufWriter::new(fs::File::create(path)?)),
            Dataset::Schrodinger(d) => write_json(path, d),
        }
    }

    pub fn read(model: ModelKind, path: &Path) -> Result<Self> {
        let f = fs::File::open(path)?;
        Ok(match model {
            ModelKind::Xray => Dataset::Xray(ScatteringDataset::read_json(f)?),
            ModelKind::Schrodinger => Dataset::Schrodinger(serde_json::from_reader(f)?),
        })
    }
}

fn read_truth_file(path: &Path, n_nodes: usize, n_components: usize) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut cols = vec![Vec::with_capacity(n_nodes); n_components];
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != n_components {
            return Err(config_err(format!(
                "truth file rows need {n_components} columns, found {}",
                rec.len()
            )));
        }
        for (c, v) in cols.iter_mut().zip(rec.iter()) {
            c.push(v.trim().parse::<f64>().map_err(|e| config_err(format!("truth file: {e}")))?);
        }
    }
    if cols[0].len() != n_nodes {
        return Err(config_err(format!(
            "truth file has {} rows, the parameter grid has {n_nodes} nodes",
            cols[0].len()
        )));
    }
    Ok(cols)
}

/// X-ray truth as a continuous field (presets) or a mesh field (file).
pub fn xray_truth(cfg: &ExperimentConfig, mesh: &Arc<TriMesh<f64>>) -> Result<MatrixField<f64>> {
    match &cfg.truth {
        TruthSpec::Preset => Ok(presets::truth()),
        TruthSpec::File { path } => {
            let cols = read_truth_file(path, mesh.n_nodes(), 3)?;
            MatrixField::from_mesh(Algebra::Su2, mesh.clone(), &cols)
        }
    }
}

fn xray_test_field(t: &TestField) -> Result<MatrixField<f64>> {
    match t {
        TestField::Su2 { components, .. } => presets::su2_field(*components),
        TestField::Bump { .. } => Err(config_err("X-ray test fields must be su(2) fields")),
    }
}

fn bump_values(domain: &GridDomain, t: &TestField) -> Result<Vec<f64>> {
    match t {
        TestField::Bump {
            center,
            radius,
            amplitude,
            ..
        } => Ok(domain.sample(presets::bump(*center, *radius, *amplitude))),
        TestField::Su2 { .. } => Err(config_err("Schrödinger test fields must be scalar bumps")),
    }
}

fn schrodinger_theta(cfg: &ExperimentConfig, domain: &GridDomain) -> Result<Vec<f64>> {
    match &cfg.truth {
        TruthSpec::Preset => Ok(domain.sample(presets::schrodinger_theta0)),
        TruthSpec::File { path } => {
            let param = GridDomain::new(cfg.resolution.schrodinger_grid)?;
            let cols = read_truth_file(path, param.n_nodes(), 1)?;
            Ok(domain.sample(|p| param.interpolate(&cols[0], p)))
        }
    }
}

fn simulate(cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<Dataset> {
    match cfg.model {
        ModelKind::Xray => {
            let mesh = Arc::new(TriMesh::disk(cfg.resolution.mesh_rings)?);
            let truth = xray_truth(cfg, &mesh)?;
            let ctrl = StepControl::new(cfg.resolution.data_h, Scheme::Midpoint)?;
            Ok(Dataset::Xray(
                generate_dataset(&truth, n, cfg.sigma, seed, &ctrl)?.with_truth_tag(truth_tag(cfg)),
            ))
        }
        ModelKind::Schrodinger => {
            let fine = GridDomain::new(cfg.resolution.schrodinger_fine_grid)?;
            let theta = schrodinger_theta(cfg, &fine)?;
            let g = fine.sample(presets::schrodinger_boundary);
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let points: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
            let u = crate::schrodinger::schrodinger_forward(fine, &theta, &g, &points, &ExpLink)?;
            let values = u
                .iter()
                .map(|v| v + cfg.sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Ok(Dataset::Schrodinger(SchrodingerDataset {
                points,
                values,
                sigma: cfg.sigma,
                truth_tag: truth_tag(cfg),
            }))
        }
    }
}

/// Everything the sampler needs for one dataset.
pub struct Posterior {
    pub model: Box<dyn ForwardModel>,
    pub obs: Observations,
    pub prior: ScaledPrior,
    pub functionals: Vec<Functional>,
    pub truth: Vec<f64>,
    pub nodes: Vec<[f64; 2]>,
    pub n_components: usize,
}

/// Builds model, prior and functionals; `rings` overrides the mesh size.
pub fn build_posterior(cfg: &ExperimentConfig, data: &Dataset, rings: Option<usize>) -> Result<Posterior> {
    let n = data.len();
    match data {
        Dataset::Xray(d) => {
            let mesh = Arc::new(TriMesh::disk(rings.unwrap_or(cfg.resolution.mesh_rings))?);
            let ctrl = StepControl::new(cfg.resolution.forward_h, Scheme::Midpoint)?;
            let model = XrayModel::new(d.algebra, mesh.clone(), &d.beams, &ctrl)?;
            let truth = mesh_parameters(&mesh, &xray_truth(cfg, &mesh)?)?;
            let functionals = cfg
                .tracked
                .iter()
                .map(|t| mesh_functional(&mesh, t.name(), &xray_test_field(t)?))
                .collect::<Result<Vec<_>>>()?;
            let base = MaternPrior::new(mesh.nodes(), &cfg.prior)?;
            Ok(Posterior {
                obs: Observations::new(flatten_matrices(&d.measurements), d.noise_sigma)?,
                model: Box::new(model),
                prior: ScaledPrior {
                    base,
                    n_components: 3,
                    scale: rescale_factor(n, cfg.alpha(), cfg.problem()),
                },
                functionals,
                truth,
                nodes: mesh.nodes().to_vec(),
                n_components: 3,
            })
        }
        Dataset::Schrodinger(d) => {
            let domain = GridDomain::new(cfg.resolution.schrodinger_grid)?;
            let model = SchrodingerModel::new(
                domain,
                domain.sample(presets::schrodinger_boundary),
                d.points.clone(),
            )?;
            let h2 = domain.h() * domain.h();
            let interior = domain.interior_nodes();
            let functionals = cfg
                .tracked
                .iter()
                .map(|t| {
                    let v = bump_values(&domain, t)?;
                    let mut w = vec![0.0; domain.n_nodes()];
                    for &k in &interior {
                        w[k] = v[k] * h2;
                    }
                    Ok(Functional {
                        name: t.name().to_string(),
                        weights: w,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let nodes: Vec<[f64; 2]> = (0..=domain.n)
                .flat_map(|j| (0..=domain.n).map(move |i| (i, j)))
                .map(|(i, j)| domain.point(i, j))
                .collect();
            let base = MaternPrior::new(&nodes, &cfg.prior)?;
            Ok(Posterior {
                obs: Observations::new(d.values.clone(), d.sigma)?,
                model: Box::new(model),
                prior: ScaledPrior {
                    base,
                    n_components: 1,
                    scale: rescale_factor(n, cfg.alpha(), cfg.problem()),
                },
                functionals,
                truth: schrodinger_theta(cfg, &domain)?,
                nodes,
                n_components: 1,
            })
        }
    }
}

pub fn dataset_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join("dataset.json")
}

pub fn chain_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join("chain")
}

/// Simulates `cfg.n` observations and writes `dataset.json`.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let data = simulate(cfg, cfg.n, cfg.data_seed())?;
    let path = dataset_path(cfg);
    data.write(&path)?;
    stamp(cfg, &cfg.output_dir, "simulate")?;
    log::info!("wrote {} observations to {}", data.len(), path.display());
    Ok(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSummary {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub sd: f64,
    pub quantiles: Vec<[f64; 2]>,
    /// `(ξ, centre, radius)` of the credible intervals.
    pub credible: Vec<[f64; 3]>,
    pub effective_sample_size: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub n_observations: usize,
    pub acceptance_rate: f64,
    pub burn_in_acceptance_rate: f64,
    pub final_beta: f64,
    pub n_retained: usize,
    pub functionals: Vec<FunctionalSummary>,
}

pub fn summarize(record: &ChainRecord, post: &Posterior, n: usize) -> Result<ChainSummary> {
    let functionals = record
        .tracked
        .iter()
        .zip(&post.functionals)
        .map(|(s, f)| {
            let credible = [0.05, 0.1]
                .iter()
                .map(|&xi| credible_interval(s, xi).map(|(c, r)| [xi, c, r]))
                .collect::<Result<Vec<_>>>()?;
            Ok(FunctionalSummary {
                name: f.name.clone(),
                truth: f.value(&post.truth),
                mean: stats::mean(s),
                sd: stats::std_dev(s),
                quantiles: [0.025, 0.05, 0.25, 0.5, 0.75, 0.95, 0.975]
                    .iter()
                    .map(|&q| [q, stats::quantile(s, q)])
                    .collect(),
                credible,
                effective_sample_size: stats::effective_sample_size(s),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ChainSummary {
        n_observations: n,
        acceptance_rate: record.acceptance_rate,
        burn_in_acceptance_rate: record.burn_in_acceptance_rate,
        final_beta: record.final_beta,
        n_retained: record.tracked.first().map_or(0, |s| s.len()),
        functionals,
    })
}

fn write_tracked_csv(path: &Path, record: &ChainRecord) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&record.names)?;
    let len = record.tracked.first().map_or(0, |s| s.len());
    for i in 0..len {
        w.write_record(record.tracked.iter().map(|s| s[i].to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tracked_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let names: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let mut cols = vec![Vec::new(); names.len()];
    for rec in r.records() {
        let rec = rec?;
        for (c, v) in cols.iter_mut().zip(rec.iter()) {
            c.push(v.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("tracked.csv: {e}")))?);
        }
    }
    Ok((names, cols))
}

fn write_mean_field_csv(path: &Path, post: &Posterior, mean: &[f64]) -> Result<()> {
    let nn = post.nodes.len();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["x".to_string(), "y".to_string()];
    header.extend((0..post.n_components).map(|c| format!("c{c}")));
    w.write_record(&header)?;
    for (k, p) in post.nodes.iter().enumerate() {
        let mut row = vec![p[0].to_string(), p[1].to_string()];
        row.extend((0..post.n_components).map(|c| mean[c * nn + k].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_histogram_csv(path: &Path, series: &[f64]) -> Result<()> {
    let (edges, counts) = stats::histogram(series, 40);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["lower_edge", "count"])?;
    for (e, c) in edges.iter().zip(&counts) {
        w.write_record([e.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the chain on a stored dataset and writes the chain directory.
/// Reruns resume from `chain/checkpoint.json` when present.
pub fn cmd_sample(cfg: &ExperimentConfig, dataset: &Path) -> Result<ChainSummary> {
    cfg.validate()?;
    let data = Dataset::read(cfg.model, dataset)?;
    let post = build_posterior(cfg, &data, None)?;
    let dir = chain_dir(cfg);
    fs::create_dir_all(&dir)?;
    stamp(cfg, &dir, "sample")?;
    let record = run_chain(
        post.model.as_ref(),
        &post.obs,
        &post.prior,
        &post.functionals,
        &cfg.chain,
        Some(&post.truth),
        cfg.chain_seed(),
        Some(&dir),
    )?;
    write_tracked_csv(&dir.join("tracked.csv"), &record)?;
    write_mean_field_csv(&dir.join("mean_field.csv"), &post, &record.mean_field)?;
    for (name, s) in record.names.iter().zip(&record.tracked) {
        write_histogram_csv(&dir.join(format!("hist_{name}.csv")), s)?;
    }
    let summary = summarize(&record, &post, data.len())?;
    write_json(&dir.join("summary.json"), &summary)?;
    log::info!("acceptance rate {:.3}", record.acceptance_rate);
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceEntry {
    pub name: String,
    /// `σ²_ψ` for unit noise.
    pub sigma_sq: f64,
    /// Same quantity through `⟨ψ, ψ̃⟩`.
    pub duality: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub model: ModelKind,
    pub entries: Vec<VarianceEntry>,
    /// Resolution metadata of the computation.
    pub metadata: serde_json::Value,
}

impl VarianceReport {
    pub fn get(&self, name: &str) -> Option<&VarianceEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// `σ²_ψ` for every tracked test field.
pub fn compute_variances(cfg: &ExperimentConfig) -> Result<VarianceReport> {
    cfg.validate()?;
    match cfg.model {
        ModelKind::Xray => {
            let r = &cfg.resolution;
            let mesh = Arc::new(TriMesh::disk(r.mesh_rings)?);
            let phi0 = xray_truth(cfg, &mesh)?;
            let cal = calibrate_n0(&r.spectral)?;
            let g = GalerkinNormal::assemble(&phi0, &r.spectral, false)?;
            let ctrl = StepControl::new(r.variance_h, Scheme::Midpoint)?;
            let quad = DiskQuadrature::for_degree(2 * r.spectral.max_degree + 8);
            let opts = PcgOptions {
                tol: 1e-8,
                max_iter: 200,
            };
            let entries = cfg
                .tracked
                .iter()
                .map(|t| {
                    let psi = xray_test_field(t)?;
                    let inv = g.invert(&psi, &cal, &opts)?;
                    Ok(VarianceEntry {
                        name: t.name().to_string(),
                        sigma_sq: asymptotic_variance(&phi0, &inv.psi_tilde, &r.spectral.grid, &ctrl)?,
                        duality: variance_by_duality(&psi, &inv.psi_tilde, &quad),
                        iterations: inv.iterations,
                        residual: inv.residual,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(VarianceReport {
                model: cfg.model,
                entries,
                metadata: serde_json::json!({
                    "max_degree": r.spectral.max_degree,
                    "boundary_grid": [r.spectral.grid.n_phi, r.spectral.grid.n_vphi],
                    "chord_h": r.spectral.h_max,
                    "variance_h": r.variance_h,
                    "n0_leakage": cal.leakage,
                    "n0_leakage_all_degrees": cal.leakage_all,
                    "convention_constant": cal.convention_constant,
                }),
            })
        }
        ModelKind::Schrodinger => {
            let domain = GridDomain::new(cfg.resolution.schrodinger_fine_grid)?;
            let theta = schrodinger_theta(cfg, &domain)?;
            let g = domain.sample(presets::schrodinger_boundary);
            let lin = Linearization::new(domain, &theta, &g, &ExpLink)?;
            let entries = cfg
                .tracked
                .iter()
                .map(|t| {
                    let psi = bump_values(&domain, t)?;
                    let pt = lin.invert_info(&psi)?;
                    Ok(VarianceEntry {
                        name: t.name().to_string(),
                        sigma_sq: lin.variance(&psi)?,
                        duality: domain.inner(&psi, &pt),
                        iterations: 0,
                        residual: 0.0,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(VarianceReport {
                model: cfg.model,
                entries,
                metadata: serde_json::json!({ "grid_intervals": domain.n }),
            })
        }
    }
}

pub fn cmd_variance(cfg: &ExperimentConfig) -> Result<VarianceReport> {
    let rep = compute_variances(cfg)?;
    write_json(&cfg.output_dir.join("variance.json"), &rep)?;
    let mut w = csv::Writer::from_path(cfg.output_dir.join("variance.csv"))?;
    w.write_record(["name", "sigma_sq", "duality", "iterations", "residual"])?;
    for e in &rep.entries {
        w.write_record([
            e.name.clone(),
            e.sigma_sq.to_string(),
            e.duality.to_string(),
            e.iterations.to_string(),
            e.residual.to_string(),
        ])?;
    }
    w.flush()?;
    stamp(cfg, &cfg.output_dir, "variance")?;
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticEntry {
    pub name: String,
    /// `σ²·σ²_ψ`: limiting variance of `√N⟨θ, ψ⟩` at noise level `σ`.
    pub theory_variance: f64,
    pub report: BvmReport,
}

/// BvM diagnostics of a finished chain against the asymptotic variances.
/// Uses `variance.json` from the output directory when present.
pub fn cmd_diagnose(cfg: &ExperimentConfig, chain: &Path) -> Result<Vec<DiagnosticEntry>> {
    cfg.validate()?;
    let (names, series) = read_tracked_csv(&chain.join("tracked.csv"))?;
    let vpath = cfg.output_dir.join("variance.json");
    let var: VarianceReport = if vpath.exists() {
        serde_json::from_slice(&fs::read(&vpath)?)?
    } else {
        compute_variances(cfg)?
    };
    let out = names
        .iter()
        .zip(&series)
        .map(|(name, s)| {
            let e = var
                .get(name)
                .ok_or_else(|| config_err(format!("no variance for functional {name}")))?;
            let theory = cfg.sigma * cfg.sigma * e.sigma_sq;
            Ok(DiagnosticEntry {
                name: name.clone(),
                theory_variance: theory,
                report: bvm_diagnostic(s, theory, cfg.n)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(&chain.join("diagnose.json"), &out)?;
    Ok(out)
}

/// Seeds of replication `r`: data then chain.
pub fn replication_seeds(cfg: &ExperimentConfig, r: usize) -> (u64, u64) {
    let base = cfg.seed.wrapping_mul(1_000_003);
    (base.wrapping_add(2 * r as u64 + 10), base.wrapping_add(2 * r as u64 + 11))
}

/// Repeats simulate → sample → credible interval `M` times.
pub fn run_coverage(cfg: &ExperimentConfig) -> Result<CoverageReport> {
    cfg.validate()?;
    cfg.validate_coverage()?;
    let c = &cfg.coverage;
    let rings = Some(c.mesh_rings);
    let seeds: Vec<u64> = (0..c.replications as u64).collect();
    coverage_experiment(&seeds, c.xi, |r| {
        let (ds, cs) = replication_seeds(cfg, r as usize);
        let data = simulate(cfg, c.n, ds)?;
        let post = build_posterior(cfg, &data, rings)?;
        let f = &post.functionals[c.functional];
        let rec = run_chain(
            post.model.as_ref(),
            &post.obs,
            &post.prior,
            std::slice::from_ref(f),
            &c.chain,
            Some(&post.truth),
            cs,
            None,
        )?;
        Ok(ReplicateOutput {
            truth_value: f.value(&post.truth),
            series: rec.tracked.into_iter().next().unwrap_or_default(),
            acceptance_rate: rec.acceptance_rate,
        })
    })
}

pub fn cmd_coverage(cfg: &ExperimentConfig) -> Result<CoverageReport> {
    let rep = run_coverage(cfg)?;
    write_json(&cfg.output_dir.join("coverage.json"), &rep)?;
    let mut w = csv::Writer::from_path(cfg.output_dir.join("coverage.csv"))?;
    w.write_record(["replication", "truth", "center", "radius", "covered", "acceptance_rate"])?;
    for r in &rep.replications {
        w.write_record([
            r.seed.to_string(),
            r.truth_value.to_string(),
            r.center.to_string(),
            r.radius.to_string(),
            r.covered.to_string(),
            r.acceptance_rate.to_string(),
        ])?;
    }
    w.flush()?;
    stamp(cfg, &cfg.output_dir, "coverage")?;
    Ok(rep)
}

/// Test field by name, for callers that need the field itself.
pub fn xray_test_fields(cfg: &ExperimentConfig) -> Result<Vec<MatrixField<f64>>> {
    cfg.tracked.iter().map(xray_test_field).collect()
}
