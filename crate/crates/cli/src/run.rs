//! One verification run, end to end.

use attverify_core::{grid_oracle, reconcile_regions, traverse, Problem, ReconcileReport};

use crate::config::{build_spec, ProblemConfig, PerturbationTerm};
use crate::error::Result;
use crate::image::load_image;
use crate::model::load_model;
use crate::render::write_svg;
use crate::results::{OracleDocument, ProblemEcho, ResultsDocument};

/// Axis names, numbered when an atom kind repeats.
fn parameter_names(terms: &[PerturbationTerm]) -> Vec<String> {
    terms
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let name = t.kind.name();
            if terms.iter().filter(|u| u.kind.name() == name).count() > 1 {
                format!("{name}{k}")
            } else {
                name.to_string()
            }
        })
        .collect()
}

/// Validated configuration, loaded inputs and the assembled problem.
pub struct Prepared {
    pub config: ProblemConfig,
    pub terms: Vec<PerturbationTerm>,
    pub problem: Problem<f64>,
}

impl Prepared {
    pub fn echo(&self) -> ProblemEcho {
        let c = &self.config;
        ProblemEcho {
            model: c.model.display().to_string(),
            image: c.image.clone(),
            perturbation: c.perturbation.clone(),
            parameters: parameter_names(&self.terms),
            theta_lo: self.terms.iter().map(|t| t.lo).collect(),
            theta_hi: self.terms.iter().map(|t| t.hi).collect(),
            mode: c.mode,
            filter: c.filter,
            dist: c.dist,
            delta: c.delta,
            w_delta: c.w_delta,
            ray: c.ray.clone(),
            original_label: self.problem.original_label(),
        }
    }
}

pub fn prepare(config: &ProblemConfig) -> Result<Prepared> {
    let terms = config.validate()?;
    let f = load_model(&config.model)?;
    let image = load_image(&config.image_source()?)?;
    let spec = build_spec(&terms, image.meta)?;
    let problem = Problem::new(f, spec, image.pixels, config.attention())?;
    Ok(Prepared {
        config: config.clone(),
        terms,
        problem,
    })
}

/// Runs the configured traversal and writes the requested outputs.
pub fn run(config: &ProblemConfig) -> Result<ResultsDocument> {
    let prep = prepare(config)?;
    tracing::info!(
        "{} on {} parameters, {} composite ReLU neurons",
        config.mode,
        prep.terms.len(),
        prep.problem.composite().relu_neuron_count()
    );
    let res = traverse(&prep.problem, &config.traversal(), config.mode, config.budget())?;
    let doc = ResultsDocument::from_traversal(prep.echo(), &res);
    if res.stats.budget_exhausted {
        tracing::warn!("budget exhausted after {} regions; results are partial", res.regions.len());
    }
    if let Some(path) = &config.out {
        doc.save(path)?;
    }
    if let Some(path) = &config.svg {
        write_svg(&doc, path)?;
    }
    Ok(doc)
}

/// Dense-grid labels and `ai` values for the configured problem.
pub fn run_oracle(config: &ProblemConfig, resolution: usize) -> Result<OracleDocument> {
    let prep = prepare(config)?;
    let p = &prep.problem;
    let r = grid_oracle(p.classifier(), p.spec(), p.x0(), resolution, p.config())?;
    let doc = OracleDocument::from_result(&r);
    if let Some(path) = &config.out {
        doc.save(path)?;
    }
    Ok(doc)
}

pub fn reconcile_documents(
    results: &ResultsDocument,
    oracle: &OracleDocument,
    boundary_tol: f64,
    ai_tol: f64,
) -> Result<ReconcileReport<f64>> {
    let polys = results.polytopes()?;
    let parts: Vec<_> = results
        .regions
        .iter()
        .zip(&polys)
        .map(|(r, p)| (p, r.cls_verdict, r.ai()))
        .collect();
    Ok(reconcile_regions(&parts, &oracle.to_result()?, boundary_tol, ai_tol)?)
}
