use std::fmt::Write as _;
use std::sync::Arc;

use orthofem::analysis::{error_norms, ConvergenceTable, ErrorReport, ManufacturedSolution, TableRow};
use orthofem::fespace::{FeFunction, FeSpace};
use orthofem::mesh::{build_quad, build_tri, MeshKind, StructuredMesh};
use orthofem::solver::{solve, ProblemSpec, SolveReport};

use crate::config::StudyConfig;
use crate::Result;

#[derive(Debug, Clone)]
pub struct LevelReport {
    pub n: usize,
    pub dim: usize,
    pub solve: SolveReport,
    pub errors: ErrorReport,
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub table: ConvergenceTable,
    pub levels: Vec<LevelReport>,
    /// First level that could not be solved, with the reason.
    pub failure: Option<(usize, String)>,
}

impl StudyOutcome {
    /// Every requested level ran and converged.
    pub fn complete(&self, requested: usize) -> bool {
        self.failure.is_none() && self.levels.len() == requested && self.levels.iter().all(|l| l.solve.converged)
    }

    pub fn max_residual(&self) -> f64 {
        self.levels.iter().map(|l| l.solve.residual).fold(0.0, f64::max)
    }
}

pub fn build_mesh(kind: MeshKind, n: usize, domain: (f64, f64)) -> orthofem::Result<StructuredMesh> {
    let mesh = match kind {
        MeshKind::Quad => build_quad(n)?,
        MeshKind::Triangle(p) => build_tri(n, p)?,
    };
    mesh.on_box(domain.0, domain.1)
}

/// Solves one level and measures its errors against the manufactured solution.
pub fn run_level(cfg: &StudyConfig, n: usize) -> Result<(FeFunction, LevelReport)> {
    let law = cfg.law()?;
    let ms = ManufacturedSolution::for_law(&law)?;
    let space = FeSpace::new(build_mesh(cfg.mesh, n, cfg.domain)?);
    let spec = ProblemSpec::new(space.clone(), law, Arc::new(move |x| ms.eval(x)));
    let (u, report) = solve(&spec, &cfg.flow)?;
    let errors = error_norms(&u, &ms, &law, cfg.quad_degree)?;
    let level = LevelReport { n, dim: space.num_dofs(), solve: report, errors };
    Ok((u, level))
}

/// Levels run coarse to fine; a failing level stops the sweep and is recorded.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyOutcome> {
    cfg.validate()?;
    let mut levels = Vec::new();
    let mut failure = None;
    for &n in &cfg.ns {
        match run_level(cfg, n) {
            Ok((_, level)) => levels.push(level),
            Err(e) => {
                failure = Some((n, e.to_string()));
                break;
            }
        }
    }
    let mut table = ConvergenceTable::new(String::new());
    for l in &levels {
        table.push(TableRow::from_report(l.dim, &l.errors))?;
    }
    table.meta = meta_line(cfg, &levels, failure.as_ref());
    Ok(StudyOutcome { table, levels, failure })
}

fn meta_line(cfg: &StudyConfig, levels: &[LevelReport], failure: Option<&(usize, String)>) -> String {
    let name = match cfg.mesh {
        MeshKind::Quad => "quad",
        MeshKind::Triangle(p) => p.name(),
    };
    let mut s = format!(
        "mesh={name} p1={} p2={} delta={} box={},{} tau={} tol={:e} residual_tol={} clamp={:e} quad_degree={}",
        cfg.p[0],
        cfg.p[1],
        cfg.delta,
        cfg.domain.0,
        cfg.domain.1,
        cfg.flow.tau,
        cfg.flow.tol,
        cfg.flow.residual_tol.map_or("none".to_string(), |r| format!("{r:e}")),
        cfg.flow.clamp,
        cfg.quad_degree,
    );
    s.push_str(" tau_schedule=");
    for (i, l) in levels.iter().enumerate() {
        if i > 0 {
            s.push(';');
        }
        let steps: Vec<String> = l.solve.tau_schedule.iter().map(|(k, t)| format!("{k}:{t}")).collect();
        let _ = write!(s, "N{}[{}]", l.n, steps.join(","));
    }
    let converged = levels.iter().filter(|l| l.solve.converged).count();
    let _ = write!(s, " converged={converged}/{}", cfg.ns.len());
    if let Some((n, why)) = failure {
        let _ = write!(s, " incomplete=N{n}: {}", why.replace('\n', " "));
    }
    s
}
