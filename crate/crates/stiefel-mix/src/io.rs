//! Dataset ingestion, run configuration, and posterior summary emission.
//!
//! The canonical data format is a flat CSV of frames, one row per
//! observation: `d,p,id,x11,x12,...` with the matrix flattened row-major
//! (x{row}{col}). An orbital-element converter produces such files from
//! (inclination, node, perihelion-argument) triples. All emitted files are
//! byte-deterministic given the chain and input.

use crate::hypergeom::{Concentration, HypergeomConfig};
use crate::langevin::{self, LangevinParams};
use crate::manifold::{self, StiefelPoint};
use crate::mixture::{
    self, ChainOutput, KappaPrior, MixtureError, PredictiveDensity, PriorSpec, Variant,
};
use crate::numeric::logsumexp;
use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("frames too far from orthonormal (deviation > {ORBIT_REJECT_TOL}) at data rows {rows:?}")]
    DataQuality { rows: Vec<usize> },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Manifold(#[from] manifold::ManifoldError),
    #[error(transparent)]
    Mixture(#[from] MixtureError),
    #[error(transparent)]
    Langevin(#[from] langevin::LangevinError),
}

/// Frames cleaner than this are taken as-is; dirtier ones (up to
/// [`ORBIT_REJECT_TOL`]) are re-orthonormalized by polar projection.
pub const PROJECT_TOL: f64 = 1e-10;
/// Beyond this orthonormality deviation a row is considered corrupt, not
/// merely noisy, and the whole file is rejected.
pub const ORBIT_REJECT_TOL: f64 = 1e-3;

/// A set of observations sharing one Stiefel geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    d: usize,
    p: usize,
    pub frames: Vec<StiefelPoint>,
    pub ids: Vec<String>,
}

impl Dataset {
    /// `ids` may be empty, in which case row numbers are generated.
    pub fn new(frames: Vec<StiefelPoint>, ids: Vec<String>) -> Result<Self, IoError> {
        let first = frames
            .first()
            .ok_or_else(|| IoError::Config("empty dataset".into()))?;
        let (d, p) = (first.d(), first.p());
        if frames.iter().any(|f| f.d() != d || f.p() != p) {
            return Err(IoError::Config("frames with mixed (d, p)".into()));
        }
        let ids = if ids.is_empty() {
            (0..frames.len()).map(|i| format!("row-{:04}", i + 1)).collect()
        } else if ids.len() == frames.len() {
            ids
        } else {
            return Err(IoError::Config(format!(
                "{} ids for {} frames",
                ids.len(),
                frames.len()
            )));
        };
        Ok(Dataset { d, p, frames, ids })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

/// Reads a frames CSV (header `d,p,id,x11,...`). Rows with orthonormality
/// deviation in (PROJECT_TOL, ORBIT_REJECT_TOL] are polar-projected back
/// onto the manifold; dirtier rows fail the whole file, listed by data row
/// number (1-based, excluding the header).
pub fn parse_frames_csv(path: &Path) -> Result<Dataset, IoError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let head: Vec<&str> = header.split(',').map(str::trim).collect();
    if head.len() < 4 || head[0] != "d" || head[1] != "p" || head[2] != "id" {
        return Err(parse_err(path, 1, "expected header starting `d,p,id,x11,...`"));
    }

    let mut frames = Vec::new();
    let mut ids = Vec::new();
    let mut shape: Option<(usize, usize)> = None;
    let mut bad_rows = Vec::new();
    let mut data_row = 0usize;
    for (idx, line) in lines {
        let lineno = idx + 1; // 1-based over the whole file
        if line.trim().is_empty() {
            continue;
        }
        data_row += 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(parse_err(path, lineno, "expected at least d,p,id fields"));
        }
        let d: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad d field {:?}", fields[0])))?;
        let p: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad p field {:?}", fields[1])))?;
        match shape {
            None => shape = Some((d, p)),
            Some(s) if s != (d, p) => {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("frame is {d}x{p} but the file started with {}x{}", s.0, s.1),
                ));
            }
            _ => {}
        }
        if fields.len() != 3 + d * p {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {} values for a {d}x{p} frame, got {}", d * p, fields.len() - 3),
            ));
        }
        let mut m = DMatrix::zeros(d, p);
        for i in 0..d {
            for j in 0..p {
                let raw = fields[3 + i * p + j];
                m[(i, j)] = raw
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("bad value {raw:?}")))?;
            }
        }
        let deviation = manifold::orthonormality_deviation(&m);
        if deviation > ORBIT_REJECT_TOL {
            bad_rows.push(data_row);
            continue;
        }
        let frame = if deviation > PROJECT_TOL {
            manifold::project(&m)?
        } else {
            StiefelPoint::new(m)?
        };
        frames.push(frame);
        ids.push(fields[2].to_string());
    }
    if !bad_rows.is_empty() {
        return Err(IoError::DataQuality { rows: bad_rows });
    }
    if frames.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    Dataset::new(frames, ids)
}

/// Writes a dataset in the format `parse_frames_csv` reads. Values use the
/// shortest representation that round-trips to the identical f64, so
/// parse -> write -> parse is exact. Ids must not contain commas.
pub fn write_frames_csv(data: &Dataset, path: &Path) -> Result<(), IoError> {
    let (d, p) = (data.d(), data.p());
    let mut out = String::from("d,p,id");
    for i in 1..=d {
        for j in 1..=p {
            write!(out, ",x{i}{j}").unwrap();
        }
    }
    out.push('\n');
    for (frame, id) in data.frames.iter().zip(&data.ids) {
        if id.contains(',') {
            return Err(IoError::Config(format!("id {id:?} contains a comma")));
        }
        write!(out, "{d},{p},{id}").unwrap();
        let m = frame.matrix();
        for i in 0..d {
            for j in 0..p {
                write!(out, ",{}", m[(i, j)]).unwrap();
            }
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Maps orbital orientation angles to the orbit's frame in V_{2,3}: the
/// 3-1-3 rotation R_z(node) R_x(inclination) R_z(perihelion argument)
/// applied to (e1, e2). Column one points at perihelion, column two lies
/// in-plane a quarter turn ahead.
pub fn orbital_elements_to_frame(
    inclination: f64,
    lon_ascending_node: f64,
    arg_perihelion: f64,
) -> Result<StiefelPoint, IoError> {
    for a in [inclination, lon_ascending_node, arg_perihelion] {
        if !a.is_finite() {
            return Err(IoError::Config(format!("non-finite angle {a}")));
        }
    }
    let rz = |a: f64| {
        Matrix3::new(
            a.cos(), -a.sin(), 0.0,
            a.sin(), a.cos(), 0.0,
            0.0, 0.0, 1.0,
        )
    };
    let rx = |a: f64| {
        Matrix3::new(
            1.0, 0.0, 0.0,
            0.0, a.cos(), -a.sin(),
            0.0, a.sin(), a.cos(),
        )
    };
    let r = rz(lon_ascending_node) * rx(inclination) * rz(arg_perihelion);
    let mut m = DMatrix::zeros(3, 2);
    for i in 0..3 {
        m[(i, 0)] = r[(i, 0)];
        m[(i, 1)] = r[(i, 1)];
    }
    Ok(StiefelPoint::new(m)?)
}

/// Converts a CSV of orbital elements in degrees (header
/// `id,i_deg,node_deg,peri_deg`) into a frames CSV at `output`. Returns the
/// number of converted rows.
pub fn convert_orbit_file(input: &Path, output: &Path) -> Result<usize, IoError> {
    let text = fs::read_to_string(input)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(input, 1, "empty file"))?;
    let head: Vec<&str> = header.split(',').map(str::trim).collect();
    if head != ["id", "i_deg", "node_deg", "peri_deg"] {
        return Err(parse_err(input, 1, "expected header `id,i_deg,node_deg,peri_deg`"));
    }
    let mut frames = Vec::new();
    let mut ids = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(parse_err(input, lineno, format!("expected 4 fields, got {}", fields.len())));
        }
        let mut angles = [0.0f64; 3];
        for (k, raw) in fields[1..].iter().enumerate() {
            angles[k] = raw
                .parse()
                .map_err(|_| parse_err(input, lineno, format!("bad angle {raw:?}")))?;
        }
        let to_rad = std::f64::consts::PI / 180.0;
        frames.push(orbital_elements_to_frame(
            angles[0] * to_rad,
            angles[1] * to_rad,
            angles[2] * to_rad,
        )?);
        ids.push(fields[0].to_string());
    }
    let n = frames.len();
    write_frames_csv(&Dataset::new(frames, ids)?, output)?;
    Ok(n)
}

fn default_thin() -> usize {
    1
}

fn default_m_aux() -> usize {
    3
}

fn default_step_g() -> f64 {
    0.05
}

fn default_step_kappa() -> f64 {
    0.3
}

/// A full sampler run description, read from flat TOML. The seed is
/// deliberately not defaulted from entropy: a run without a seed (here or
/// on the command line) is refused.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub variant: Variant,
    pub alpha: f64,
    pub kappa_prior: KappaPrior,
    pub iters: usize,
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default = "default_m_aux")]
    pub m_aux: usize,
    #[serde(default = "default_step_g")]
    pub step_g: f64,
    #[serde(default = "default_step_kappa")]
    pub step_kappa: f64,
    pub seed: Option<u64>,
    pub out_dir: Option<String>,
}

impl RunConfig {
    pub fn parse_toml(text: &str) -> Result<Self, IoError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| IoError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::parse_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), IoError> {
        if self.iters <= self.burn_in {
            return Err(IoError::Config(format!(
                "iters ({}) must exceed burn_in ({})",
                self.iters, self.burn_in
            )));
        }
        if self.thin == 0 || self.m_aux == 0 {
            return Err(IoError::Config("thin and m_aux must be at least 1".into()));
        }
        for (name, v) in [("step_g", self.step_g), ("step_kappa", self.step_kappa)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(IoError::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        self.prior()?; // alpha and the kappa prior validate there
        Ok(())
    }

    pub fn prior(&self) -> Result<PriorSpec, IoError> {
        Ok(PriorSpec::new(self.alpha, self.kappa_prior.clone(), self.variant)?)
    }

    /// The effective seed: a command-line value wins over the file; absent
    /// both, the run is refused.
    pub fn seed_with_override(&self, cli: Option<u64>) -> Result<u64, IoError> {
        cli.or(self.seed).ok_or_else(|| {
            IoError::Config("no seed: set `seed` in the config or pass --seed".into())
        })
    }

    /// Echo for provenance; written next to the outputs of every run.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }
}

// Budgets for the emitted predictive grid. The predictive is averaged over
// an even subsample of retained states so emission stays a few seconds even
// for long chains.
const PREDICTIVE_STATE_BUDGET: usize = 64;
const PREDICTIVE_POOL: usize = 256;
const GRID_FRAMES: usize = 128;
const MARGINAL_DIRECTIONS: usize = 96;
const MARGINAL_QUADRATURE: usize = 64;
// decouples the emission RNG stream from the chain's
const EMIT_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..n)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// An orthonormal basis of the plane orthogonal to the unit vector `u`.
fn plane_basis(u: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let e = if u.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let a = (e - u * e.dot(u)).normalize();
    let b = u.cross(&a);
    (a, b)
}

/// Writes the posterior summary file set into `outdir`:
///
/// * `coclustering.csv` — n x n co-assignment counts in dataset row order;
/// * `cluster_counts.csv` — histogram of the number of clusters per
///   retained state;
/// * `predictive_grid.csv` — log posterior predictive at Haar grid frames,
///   plus (for the d=3, p=2 geometry) per-column sphere marginals obtained
///   by quadrature over the orthogonal-circle nuisance column;
/// * `summary.txt` — modal cluster count, last-state cluster sizes, and
///   acceptance rates.
///
/// Everything is deterministic given the chain: the grid RNG is seeded from
/// the chain's own seed.
pub fn emit_summaries(
    chain: &ChainOutput,
    data: &Dataset,
    outdir: &Path,
    cfg: &HypergeomConfig,
) -> Result<(), IoError> {
    if chain.n_obs != data.len() {
        return Err(IoError::Config(format!(
            "chain ran on {} observations but the dataset has {}",
            chain.n_obs,
            data.len()
        )));
    }
    fs::create_dir_all(outdir)?;

    // co-clustering counts, dataset order
    let counts = mixture::coclustering_matrix(chain);
    let mut out = String::from("id");
    for id in &data.ids {
        write!(out, ",{id}").unwrap();
    }
    out.push('\n');
    for i in 0..data.len() {
        write!(out, "{}", data.ids[i]).unwrap();
        for j in 0..data.len() {
            write!(out, ",{}", counts[(i, j)]).unwrap();
        }
        out.push('\n');
    }
    fs::write(outdir.join("coclustering.csv"), out)?;

    // cluster-count histogram
    let hist = mixture::cluster_count_histogram(chain, 1);
    let mut out = String::from("n_clusters,count\n");
    for (k, c) in &hist {
        writeln!(out, "{k},{c}").unwrap();
    }
    fs::write(outdir.join("cluster_counts.csv"), out)?;

    // predictive grid
    let stride = chain.retained.len().div_ceil(PREDICTIVE_STATE_BUDGET).max(1);
    let thinned = ChainOutput {
        retained: chain.retained.iter().step_by(stride).cloned().collect(),
        log_joint: Vec::new(),
        acceptance: chain.acceptance,
        seed: chain.seed,
        settings: chain.settings.clone(),
        n_obs: chain.n_obs,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(chain.seed ^ EMIT_SEED_SALT);
    let predictive = PredictiveDensity::new(
        &thinned,
        &chain.settings.prior,
        PREDICTIVE_POOL,
        &mut rng,
        cfg,
    )?;
    let (d, p) = (data.d(), data.p());
    let mut out = String::from("kind,index,column");
    for i in 1..=d {
        for j in 1..=p {
            write!(out, ",x{i}{j}").unwrap();
        }
    }
    out.push_str(",log_density\n");
    for idx in 0..GRID_FRAMES {
        let x = manifold::sample_haar(d, p, &mut rng)?;
        let lf = predictive.log_density(&x)?;
        write!(out, "frame,{idx},").unwrap();
        let m = x.matrix();
        for i in 0..d {
            for j in 0..p {
                write!(out, ",{}", m[(i, j)]).unwrap();
            }
        }
        writeln!(out, ",{lf}").unwrap();
    }
    if d == 3 && p == 2 {
        // marginal density of one column at direction u: average the joint
        // over the other column's circle in the plane orthogonal to u
        let mut terms = Vec::with_capacity(MARGINAL_QUADRATURE);
        for (idx, u) in fibonacci_sphere(MARGINAL_DIRECTIONS).iter().enumerate() {
            let (a, b) = plane_basis(u);
            for col in 0..2 {
                terms.clear();
                for t in 0..MARGINAL_QUADRATURE {
                    let theta =
                        2.0 * std::f64::consts::PI * t as f64 / MARGINAL_QUADRATURE as f64;
                    let v = a * theta.cos() + b * theta.sin();
                    let mut m = DMatrix::zeros(3, 2);
                    for i in 0..3 {
                        m[(i, col)] = u[i];
                        m[(i, 1 - col)] = v[i];
                    }
                    terms.push(predictive.log_density(&StiefelPoint::new(m)?)?);
                }
                let lmarg = logsumexp(&terms) - (MARGINAL_QUADRATURE as f64).ln();
                write!(out, "marginal,{idx},{}", col + 1).unwrap();
                write!(out, ",{},{},{}", u.x, u.y, u.z).unwrap();
                for _ in 3..d * p {
                    out.push(',');
                }
                writeln!(out, ",{lmarg}").unwrap();
            }
        }
    }
    fs::write(outdir.join("predictive_grid.csv"), out)?;

    // plain-text digest
    let retained = chain.retained.len();
    let modal = hist
        .iter()
        .max_by_key(|(k, c)| (**c, std::cmp::Reverse(**k)))
        .map(|(k, _)| *k)
        .unwrap_or(0);
    let mut out = String::new();
    writeln!(out, "retained states: {retained}").unwrap();
    writeln!(out, "observations: {}", chain.n_obs).unwrap();
    writeln!(out, "seed: {}", chain.seed).unwrap();
    writeln!(
        out,
        "modal cluster count: {modal} ({} of {} states)",
        hist.get(&modal).copied().unwrap_or(0),
        retained
    )
    .unwrap();
    if let Some(last) = chain.retained.last() {
        let mut sizes = last.cluster_sizes();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        let shown: Vec<String> = sizes.iter().take(8).map(|s| s.to_string()).collect();
        writeln!(out, "largest clusters in final retained state: {}", shown.join(", "))
            .unwrap();
    }
    writeln!(
        out,
        "location acceptance rate: {:.4}",
        chain.acceptance.location_rate()
    )
    .unwrap();
    writeln!(
        out,
        "concentration acceptance rate: {:.4}",
        chain.acceptance.concentration_rate()
    )
    .unwrap();
    fs::write(outdir.join("summary.txt"), out)?;
    Ok(())
}

/// A light grayscale heat map of the co-clustering counts, for eyeballing
/// block structure. Convenience only; CSV outputs are authoritative.
pub fn render_heatmap_svg(counts: &DMatrix<u32>, path: &Path) -> Result<(), IoError> {
    let n = counts.nrows();
    let cell = 4usize;
    let peak = counts.iter().copied().max().unwrap_or(1).max(1);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{0}\" shape-rendering=\"crispEdges\">\n",
        n * cell
    );
    for i in 0..n {
        for j in 0..counts.ncols() {
            let level = 255 - (counts[(i, j)] as u64 * 255 / peak as u64) as u8;
            writeln!(
                out,
                "<rect x=\"{}\" y=\"{}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({level},{level},{level})\"/>",
                j * cell,
                i * cell
            )
            .unwrap();
        }
    }
    out.push_str("</svg>\n");
    fs::write(path, out)?;
    Ok(())
}

/// A synthetic stand-in with the shape of the near-Earth-object orbit
/// dataset: n = 162 frames in V_{2,3} from three well-separated
/// concentration-(30,30) components. Returns the dataset and the true
/// component labels.
pub fn synthetic_neo_standin(seed: u64) -> Result<(Dataset, Vec<usize>), IoError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kappa = Concentration::new(vec![30.0, 30.0]).expect("fixed kappa");
    let mut locations: Vec<StiefelPoint> = Vec::new();
    while locations.len() < 3 {
        let c = manifold::sample_haar(3, 2, &mut rng)?;
        if locations
            .iter()
            .map(|g| manifold::frobenius_distance(g, &c).expect("same shape"))
            .all(|dist| dist >= 1.2)
        {
            locations.push(c);
        }
    }
    let mut frames = Vec::with_capacity(162);
    let mut labels = Vec::with_capacity(162);
    let mut ids = Vec::with_capacity(162);
    for (c, g) in locations.iter().enumerate() {
        let params = LangevinParams::new(g.clone(), kappa.clone())?;
        for _ in 0..54 {
            let (x, _) = langevin::sample(&params, &mut rng)?;
            ids.push(format!("synth-{:03}", frames.len() + 1));
            frames.push(x);
            labels.push(c);
        }
    }
    Ok((Dataset::new(frames, ids)?, labels))
}
