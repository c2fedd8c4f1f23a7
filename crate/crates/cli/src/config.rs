use std::path::PathBuf;
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::Parser;
use orthofem::fespace::quadrature::QuadratureRule;
use orthofem::mesh::{MeshKind, TrianglePattern};
use orthofem::nfunc::{GrowthLaw, DEFAULT_CLAMP};
use orthofem::solver::FlowConfig;

use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Markdown,
}

impl FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(CliError::Config(format!("unknown format '{other}' (csv | markdown)"))),
        }
    }
}

/// Command-line flags; every value may also come from `--config` as `key = value`.
#[derive(Debug, Clone, Default, Parser)]
#[command(name = "orthofem-study", version, about = "Run a mesh-refinement study and print its convergence table")]
pub struct Args {
    /// quad | triangle | boxslash | alternating-kuhn | unionjack | cross
    #[arg(long)]
    pub mesh: Option<String>,
    /// Triangle pattern when --mesh is `triangle`
    #[arg(long)]
    pub pattern: Option<String>,
    /// Coarsest N (cells per side)
    #[arg(long = "N0")]
    pub n0: Option<usize>,
    /// Number of uniform refinements, each doubling N
    #[arg(long)]
    pub levels: Option<usize>,
    /// Explicit comma-separated N list; overrides --N0/--levels
    #[arg(long = "n-list", value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    #[arg(long)]
    pub p1: Option<f64>,
    #[arg(long)]
    pub p2: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Computational square as `lo,hi`
    #[arg(long = "box", allow_hyphen_values = true)]
    pub domain: Option<String>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Absolute energy-increment tolerance
    #[arg(long)]
    pub tol: Option<f64>,
    /// Max-norm Galerkin residual required at convergence; `none` disables it
    #[arg(long = "residual-tol")]
    pub residual_tol: Option<String>,
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub clamp: Option<f64>,
    /// Quadrature degree of the error integrals
    #[arg(long = "quad-degree")]
    pub quad_degree: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// csv | markdown
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Compare against a stored table (table1 … table6)
    #[arg(long = "diff-paper")]
    pub diff_paper: Option<String>,
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub mesh: MeshKind,
    pub ns: Vec<usize>,
    pub p: [f64; 2],
    pub delta: f64,
    /// `(lo, hi)`: the study runs on `(lo, hi)²`.
    pub domain: (f64, f64),
    pub flow: FlowConfig,
    pub quad_degree: usize,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub diff_paper: Option<String>,
}

pub const DEFAULT_LEVELS: usize = 4;
pub const DEFAULT_DOMAIN: (f64, f64) = (-1.0, 1.0);
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-7;
pub const DEFAULT_QUAD_DEGREE: usize = 5;

/// Coarsest N whose node count starts the reference tables for this mesh.
pub fn default_n0(mesh: MeshKind) -> usize {
    match mesh {
        MeshKind::Quad => 16,
        MeshKind::Triangle(TrianglePattern::UnionJack) => 5,
        MeshKind::Triangle(_) => 10,
    }
}

impl Default for StudyConfig {
    fn default() -> Self {
        let mesh = MeshKind::Triangle(TrianglePattern::Boxslash);
        let n0 = default_n0(mesh);
        Self {
            mesh,
            ns: (0..DEFAULT_LEVELS).map(|k| n0 << k).collect(),
            p: [1.5, 1.5],
            delta: 0.0,
            domain: DEFAULT_DOMAIN,
            flow: FlowConfig { residual_tol: Some(DEFAULT_RESIDUAL_TOL), ..FlowConfig::default() },
            quad_degree: DEFAULT_QUAD_DEGREE,
            out: None,
            format: Format::Csv,
            diff_paper: None,
        }
    }
}

/// Parses flags, then fills unset values from `file` (or the `--config` path when `file` is `None`).
pub fn parse_config<I, T>(argv: I, file: Option<&str>) -> Result<StudyConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let flags = Args::try_parse_from(argv).map_err(|e| match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => CliError::Help(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    })?;
    let text = match (file, &flags.config) {
        (Some(t), _) => Some(t.to_string()),
        (None, Some(path)) => Some(std::fs::read_to_string(path)?),
        (None, None) => None,
    };
    let from_file = match text {
        Some(t) => parse_file(&t)?,
        None => Args::default(),
    };
    StudyConfig::resolve(merge(flags, from_file))
}

/// `key = value` lines; `#` starts a comment. Keys are the flag names without dashes.
pub fn parse_file(text: &str) -> Result<Args> {
    let mut a = Args::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", lineno + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        let at = |e: CliError| CliError::Config(format!("line {}: {e}", lineno + 1));
        match key.as_str() {
            "mesh" => a.mesh = Some(value.into()),
            "pattern" => a.pattern = Some(value.into()),
            "N0" | "n0" => a.n0 = Some(number(&key, value).map_err(at)?),
            "levels" => a.levels = Some(number(&key, value).map_err(at)?),
            "n-list" => {
                a.n_list = Some(value.split(',').map(|v| number(&key, v.trim())).collect::<Result<_>>().map_err(at)?)
            }
            "p1" => a.p1 = Some(number(&key, value).map_err(at)?),
            "p2" => a.p2 = Some(number(&key, value).map_err(at)?),
            "delta" => a.delta = Some(number(&key, value).map_err(at)?),
            "box" => a.domain = Some(value.into()),
            "tau" => a.tau = Some(number(&key, value).map_err(at)?),
            "tol" => a.tol = Some(number(&key, value).map_err(at)?),
            "residual-tol" => a.residual_tol = Some(value.into()),
            "max-iter" => a.max_iter = Some(number(&key, value).map_err(at)?),
            "clamp" => a.clamp = Some(number(&key, value).map_err(at)?),
            "quad-degree" => a.quad_degree = Some(number(&key, value).map_err(at)?),
            "out" => a.out = Some(value.into()),
            "format" => a.format = Some(value.into()),
            "diff-paper" => a.diff_paper = Some(value.into()),
            other => return Err(CliError::Config(format!("line {}: unknown key '{other}'", lineno + 1))),
        }
    }
    Ok(a)
}

fn number<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| CliError::Config(format!("malformed number '{value}' for {key}")))
}

fn merge(flags: Args, file: Args) -> Args {
    Args {
        mesh: flags.mesh.or(file.mesh),
        pattern: flags.pattern.or(file.pattern),
        n0: flags.n0.or(file.n0),
        levels: flags.levels.or(file.levels),
        n_list: flags.n_list.or(file.n_list),
        p1: flags.p1.or(file.p1),
        p2: flags.p2.or(file.p2),
        delta: flags.delta.or(file.delta),
        domain: flags.domain.or(file.domain),
        tau: flags.tau.or(file.tau),
        tol: flags.tol.or(file.tol),
        residual_tol: flags.residual_tol.or(file.residual_tol),
        max_iter: flags.max_iter.or(file.max_iter),
        clamp: flags.clamp.or(file.clamp),
        quad_degree: flags.quad_degree.or(file.quad_degree),
        out: flags.out.or(file.out),
        format: flags.format.or(file.format),
        config: flags.config,
        diff_paper: flags.diff_paper.or(file.diff_paper),
    }
}

fn mesh_kind(mesh: Option<&str>, pattern: Option<&str>) -> Result<MeshKind> {
    let pattern = pattern.map(|p| p.parse::<TrianglePattern>()).transpose()?;
    match (mesh, pattern) {
        (None, None) => Ok(MeshKind::Triangle(TrianglePattern::Boxslash)),
        (None, Some(p)) | (Some("triangle"), Some(p)) => Ok(MeshKind::Triangle(p)),
        (Some("triangle"), None) => Err(CliError::Config("mesh = triangle needs a pattern".into())),
        (Some("quad"), Some(p)) => Err(CliError::Config(format!("quad mesh contradicts pattern {}", p.name()))),
        (Some(m), p) => {
            let kind: MeshKind = m.parse()?;
            match (kind, p) {
                (MeshKind::Triangle(a), Some(b)) if a != b => {
                    Err(CliError::Config(format!("mesh {} contradicts pattern {}", a.name(), b.name())))
                }
                _ => Ok(kind),
            }
        }
    }
}

fn parse_box(s: &str) -> Result<(f64, f64)> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| CliError::Config(format!("box '{s}' is not lo,hi")))?;
    let (lo, hi): (f64, f64) = (number("box", lo.trim())?, number("box", hi.trim())?);
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(CliError::Config(format!("box ({lo}, {hi}) is empty")));
    }
    Ok((lo, hi))
}

impl StudyConfig {
    pub fn resolve(a: Args) -> Result<Self> {
        let base = StudyConfig::default();
        let mesh = mesh_kind(a.mesh.as_deref(), a.pattern.as_deref())?;
        let ns = match a.n_list {
            Some(list) => list,
            None => {
                let n0 = a.n0.unwrap_or_else(|| default_n0(mesh));
                let levels = a.levels.unwrap_or(DEFAULT_LEVELS);
                (0..levels).map(|k| n0 << k).collect()
            }
        };
        let residual_tol = match a.residual_tol.as_deref() {
            None => base.flow.residual_tol,
            Some("none") => None,
            Some(v) => Some(number("residual-tol", v)?),
        };
        let flow = FlowConfig {
            tau: a.tau.unwrap_or(base.flow.tau),
            tol: a.tol.unwrap_or(base.flow.tol),
            max_iter: a.max_iter.unwrap_or(base.flow.max_iter),
            clamp: a.clamp.unwrap_or(DEFAULT_CLAMP),
            residual_tol,
            ..base.flow
        };
        let cfg = StudyConfig {
            mesh,
            ns,
            p: [a.p1.unwrap_or(base.p[0]), a.p2.unwrap_or(base.p[1])],
            delta: a.delta.unwrap_or(base.delta),
            domain: a.domain.as_deref().map(parse_box).transpose()?.unwrap_or(base.domain),
            flow,
            quad_degree: a.quad_degree.unwrap_or(base.quad_degree),
            out: a.out,
            format: a.format.as_deref().map(str::parse).transpose()?.unwrap_or(base.format),
            diff_paper: a.diff_paper,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ns.is_empty() {
            return Err(CliError::Config("at least one level is needed".into()));
        }
        if self.ns[0] < 2 || self.ns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config(format!("N list {:?} must start at 2 or more and increase", self.ns)));
        }
        self.law()?;
        self.flow.validate()?;
        QuadratureRule::triangle(self.quad_degree)?;
        if let Some(name) = &self.diff_paper {
            crate::fixtures::paper_table(name)?;
        }
        Ok(())
    }

    pub fn law(&self) -> Result<GrowthLaw> {
        Ok(GrowthLaw::new(self.p[0], self.p[1], self.delta)?)
    }
}
