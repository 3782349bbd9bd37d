//! Scenario-driven command line harness for the stationary-disc laboratory.
//!
//! `disclab run --config scenario.json --out reports/` executes the analyses
//! requested by the scenario in dependency order and writes report.json plus
//! CSV artifacts; the other subcommands are thin wrappers that run a single
//! analysis. Exit codes: 0 all requested assertions passed, 1 an analysis
//! failed or was skipped (report.json is still written), 2 configuration
//! errors.

mod scenario;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64 as C64;
use serde::Serialize;

use disclab::analysis::{
    center_jacobian, dilate, jet_determination_experiment, jet_jacobian, jet_map,
    recover_from_jet, ExperimentOptions, ExperimentReport, MapMonomial, PolynomialAutomorphism,
};
use disclab::conormal::{
    build_initial_lift, eval_conormal, residual_csv, verify_stationary, ConormalSystem,
};
use disclab::discs::{holder_norm, DEFAULT_ALPHA};
use disclab::geometry::{self, config::build_perturbation, DefiningFunction, NonDegeneracyReport};
use disclab::grid::BoundaryGrid;
use disclab::rh_linear::{
    assemble_g, explicit_kernel_basis, gram_d, maslov_index, numeric_kernel,
    partial_indices_structured,
};
use disclab::solver::{family_chart, FamilyChart, SolverConfig};

use scenario::{analysis_order, AutomorphismSpec, ExperimentExpectation, Scenario, KNOWN_ANALYSES};

#[derive(Parser)]
#[command(name = "disclab", version, about = "Stationary-disc laboratory", max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Scenario configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.json and CSV artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override for the randomized witness searches.
    #[arg(long)]
    seed: Option<u64>,
    /// Truncation degree override.
    #[arg(long)]
    nf: Option<usize>,
    /// Boundary grid size override.
    #[arg(long)]
    grid: Option<usize>,
    /// Hölder exponent for reported norms.
    #[arg(long)]
    alpha: Option<f64>,
    /// Defect tolerance for the disc and solve assertions.
    #[arg(long)]
    tol: Option<f64>,
    /// Perturbation scale override.
    #[arg(long)]
    t: Option<f64>,
    /// Dilation parameter override for the determination experiment.
    #[arg(long)]
    tdil: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the analyses listed in the scenario.
    Run(CommonArgs),
    /// Non-degeneracy report: conditions (a), (b), (f), (t) with witnesses.
    Check(CommonArgs),
    /// Construct the initial lift and verify it is stationary.
    Disc(CommonArgs),
    /// Maslov index and structured partial indices.
    Indices(CommonArgs),
    /// Numeric kernel dimensions and the explicit-basis comparison.
    Kernel(CommonArgs),
    /// Gauss-Newton solve at the scenario scale t.
    Solve(CommonArgs),
    /// Center-map Jacobian rank.
    Centers(CommonArgs),
    /// Jet-map Jacobian rank and a recovery round trip.
    Jets(CommonArgs),
    /// The 2-jet determination experiment.
    Determine(CommonArgs),
}

#[derive(Serialize)]
struct Skipped {
    analysis: String,
    reason: String,
}

#[derive(Serialize, Default)]
struct Results {
    #[serde(skip_serializing_if = "Option::is_none")]
    check: Option<NonDegeneracyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    disc: Option<DiscResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    indices: Option<IndicesResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel: Option<KernelResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solve: Option<SolveResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    centers: Option<CentersResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    jets: Option<JetsResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    determine: Option<DetermineResult>,
}

#[derive(Serialize)]
struct DiscResult {
    attachment_sup: f64,
    lift_defect: f64,
    min_c_norm: f64,
    nonvanishing: bool,
    holder_norm_h: f64,
    alpha: f64,
    pass: bool,
}

#[derive(Serialize)]
struct IndicesResult {
    maslov: i64,
    partial_indices: Vec<i64>,
    expected_maslov: i64,
    min_abs_det: f64,
    pass: bool,
}

#[derive(Serialize)]
struct KernelResult {
    constrained_dim: usize,
    unconstrained_dim: usize,
    expected_constrained: usize,
    expected_unconstrained: usize,
    gap_ratio_constrained: f64,
    gap_ratio_unconstrained: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    explicit_worst_angle: Option<f64>,
    pass: bool,
}

#[derive(Serialize)]
struct SolveResult {
    t: f64,
    iterations: usize,
    final_residual: f64,
    attachment_sup: f64,
    lift_defect: f64,
    pass: bool,
}

#[derive(Serialize)]
struct CentersResult {
    rank: usize,
    expected: usize,
    singular_values: Vec<f64>,
    gram_positive_definite: bool,
    equivalence_holds: bool,
    pass: bool,
}

#[derive(Serialize)]
struct JetsResult {
    rank: usize,
    expected: usize,
    roundtrip_error: f64,
    pass: bool,
}

#[derive(Serialize)]
struct DetermineResult {
    expected: ExperimentExpectation,
    report: ExperimentReport,
    pass: bool,
}

#[derive(Serialize)]
struct Report {
    schema_version: u32,
    seed: u64,
    inputs: Scenario,
    results: Results,
    artifacts: Vec<String>,
    skipped: Vec<Skipped>,
    failures: Vec<String>,
    status: String,
}

struct Runner {
    scenario: Scenario,
    pencil: geometry::HermitianPencil,
    def: DefiningFunction,
    cfg: SolverConfig,
    alpha: f64,
    tol: f64,
    t_dil: f64,
    epsilon: f64,
    outdir: Option<PathBuf>,
    results: Results,
    artifacts: Vec<String>,
    skipped: Vec<Skipped>,
    failures: Vec<String>,
    witness_v: Option<Vec<C64>>,
    witness_c: Option<Vec<f64>>,
}

impl Runner {
    fn new(mut scenario: Scenario, args: &CommonArgs) -> anyhow::Result<Self> {
        if let Some(seed) = args.seed {
            scenario.seed = seed;
        }
        if let Some(nf) = args.nf {
            scenario.solver.n_f = Some(nf);
        }
        if let Some(grid) = args.grid {
            scenario.solver.m_grid = Some(grid);
        }
        if let Some(t) = args.t {
            scenario.scale_t = t;
        }
        if let Some(tdil) = args.tdil {
            scenario.t_dil = Some(tdil);
        }

        let pencil = scenario.pencil.build()?;
        let perturbation = build_perturbation(pencil.n(), pencil.d(), &scenario.perturbation)?;
        let def = DefiningFunction::new(pencil.clone(), perturbation, scenario.scale_t)?;
        let mut cfg = SolverConfig::default();
        if let Some(nf) = scenario.solver.n_f {
            cfg.n_f = nf;
        }
        if let Some(grid) = scenario.solver.m_grid {
            cfg.m_grid = grid;
        }
        if let Some(tol) = scenario.solver.newton_tol {
            cfg.newton_tol = tol;
        }
        if let Some(it) = scenario.solver.max_iter {
            cfg.max_iter = it;
        }
        if let Some(steps) = scenario.solver.continuation_steps {
            cfg.continuation_steps = steps;
        }
        cfg.validate()?;

        let witness_v = match &scenario.witnesses.v {
            Some(v) => {
                if v.len() != pencil.n() {
                    return Err(anyhow!("witness v must have n = {} entries", pencil.n()));
                }
                Some(v.iter().map(|[re, im]| C64::new(*re, *im)).collect())
            }
            None => geometry::find_full_witness(&pencil, scenario.trials, scenario.seed),
        };
        let witness_c = match &scenario.witnesses.c {
            Some(c) => {
                if c.len() != pencil.d() {
                    return Err(anyhow!("witness c must have d = {} entries", pencil.d()));
                }
                Some(c.clone())
            }
            None => geometry::find_invertible_combination(&pencil, scenario.trials, scenario.seed),
        };

        Ok(Self {
            alpha: args.alpha.unwrap_or(DEFAULT_ALPHA),
            tol: args.tol.unwrap_or(1e-10),
            t_dil: scenario.t_dil.unwrap_or(0.1),
            epsilon: scenario.epsilon.unwrap_or(1.0),
            outdir: args.out.clone(),
            pencil,
            def,
            cfg,
            scenario,
            results: Results::default(),
            artifacts: Vec::new(),
            skipped: Vec::new(),
            failures: Vec::new(),
            witness_v,
            witness_c,
        })
    }

    fn write_artifact(&mut self, name: &str, contents: &str) -> anyhow::Result<()> {
        if let Some(dir) = &self.outdir {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), contents)?;
            self.artifacts.push(name.to_string());
        }
        Ok(())
    }

    fn skip(&mut self, analysis: &str, reason: &str) {
        println!("{analysis}: skipped ({reason})");
        self.skipped.push(Skipped { analysis: analysis.into(), reason: reason.into() });
    }

    fn record(&mut self, analysis: &str, pass: bool, summary: String) {
        println!("{summary}");
        if !pass {
            self.failures.push(format!("{analysis}: {summary}"));
        }
    }

    /// The chart for solve/jets/determine; requires full non-degeneracy.
    fn explicit_chart(&self, def: &DefiningFunction) -> anyhow::Result<FamilyChart> {
        let v = self.witness_v.as_ref().ok_or_else(|| anyhow!("condition (f) not detected"))?;
        let c = self.witness_c.as_ref().ok_or_else(|| anyhow!("condition (t) not detected"))?;
        Ok(family_chart(def, &self.pencil, v, c, self.epsilon, &self.cfg)?)
    }

    fn automorphism(&self) -> anyhow::Result<PolynomialAutomorphism> {
        let (n, d) = (self.pencil.n(), self.pencil.d());
        Ok(match &self.scenario.automorphism {
            AutomorphismSpec::Identity => PolynomialAutomorphism::identity(n, d),
            AutomorphismSpec::Rotation { theta } => {
                PolynomialAutomorphism::phase_rotation(n, d, *theta)
            }
            AutomorphismSpec::Dilation { lambda } => PolynomialAutomorphism::dilation(n, d, *lambda),
            AutomorphismSpec::IdentityPlusTerm { component, coefficient, exponents } => {
                if *component == 0 {
                    return Err(anyhow!("automorphism component is 1-based"));
                }
                PolynomialAutomorphism::identity_plus_term(
                    n,
                    d,
                    component - 1,
                    MapMonomial {
                        coefficient: C64::new(coefficient[0], coefficient[1]),
                        exponents: exponents.clone(),
                    },
                )?
            }
        })
    }

    fn run_analysis(&mut self, name: &str) -> anyhow::Result<()> {
        match name {
            "check" => self.run_check(),
            "disc" => self.run_disc(),
            "indices" => self.run_indices(),
            "kernel" => self.run_kernel(),
            "solve" => self.run_solve(),
            "centers" => self.run_centers(),
            "jets" => self.run_jets(),
            "determine" => self.run_determine(),
            other => Err(anyhow!("unknown analysis '{other}'")),
        }
    }

    fn run_check(&mut self) -> anyhow::Result<()> {
        let report =
            geometry::non_degeneracy_report(&self.pencil, self.scenario.trials, self.scenario.seed);
        println!(
            "check: beloshapka={} fully={} (a={} rank {}, b={} dim {}, f={}, t={})",
            report.beloshapka,
            report.fully,
            report.cond_a,
            report.pencil_rank,
            report.cond_b,
            report.common_kernel_dim,
            report.cond_f,
            report.cond_t
        );
        self.results.check = Some(report);
        Ok(())
    }

    fn disc_witnesses(&mut self, analysis: &str) -> Option<(Vec<C64>, Vec<f64>)> {
        let Some(c) = self.witness_c.clone() else {
            self.skip(analysis, "condition (t) not detected; no invertible combination");
            return None;
        };
        // Disc construction needs any nonzero V; prefer the (f)-witness.
        let v = self.witness_v.clone().unwrap_or_else(|| {
            let mut v = vec![C64::new(0.0, 0.0); self.pencil.n()];
            v[0] = C64::new(1.0, 0.0);
            v
        });
        Some((v, c))
    }

    fn run_disc(&mut self) -> anyhow::Result<()> {
        let Some((v, c)) = self.disc_witnesses("disc") else { return Ok(()) };
        let lift = build_initial_lift(&self.pencil, &v, &c, self.cfg.m_grid)?.realize();
        let quadric = DefiningFunction::quadric(self.pencil.clone());
        let report = verify_stationary(&quadric, &lift, 1e-8)?;
        let hnorm = holder_norm(&lift.h, 1, self.alpha)?;
        let pass = report.attachment_sup < self.tol && report.lift_defect < self.tol;
        self.write_artifact("disc_boundary.csv", &lift.h.boundary_csv()?)?;
        let sys = ConormalSystem::new(quadric);
        let grid = BoundaryGrid::new(self.cfg.m_grid)?;
        let res = eval_conormal(&sys, &lift, &grid)?;
        self.write_artifact("disc_residual.csv", &residual_csv(&res, &grid))?;
        self.write_artifact("disc.json", &serde_json::to_string_pretty(&lift)?)?;
        self.record(
            "disc",
            pass,
            format!(
                "disc: attachment_sup={:.3e} lift_defect={:.3e} nonvanishing={} |h|_(1,{})={:.6}",
                report.attachment_sup, report.lift_defect, report.nonvanishing, self.alpha, hnorm
            ),
        );
        self.results.disc = Some(DiscResult {
            attachment_sup: report.attachment_sup,
            lift_defect: report.lift_defect,
            min_c_norm: report.min_c_norm,
            nonvanishing: report.nonvanishing,
            holder_norm_h: hnorm,
            alpha: self.alpha,
            pass,
        });
        Ok(())
    }

    fn run_indices(&mut self) -> anyhow::Result<()> {
        let Some((v, c)) = self.disc_witnesses("indices") else { return Ok(()) };
        let quadric = DefiningFunction::quadric(self.pencil.clone());
        let base = build_initial_lift(&self.pencil, &v, &c, self.cfg.m_grid)?.realize();
        let g = assemble_g(&quadric, &base, &c, self.cfg.m_grid)?;
        let maslov = maslov_index(&g)?;
        let data = partial_indices_structured(&g)?;
        let expected = 2 * (self.pencil.n() as i64) + 2 * (self.pencil.d() as i64);
        let pass = data.maslov == maslov && maslov == expected;
        println!("maslov = {maslov}");
        self.record(
            "indices",
            pass,
            format!(
                "indices: maslov={maslov} partial={:?} min|det G|={:.3e}",
                data.partial_indices,
                g.min_abs_det()
            ),
        );
        self.results.indices = Some(IndicesResult {
            maslov,
            partial_indices: data.partial_indices,
            expected_maslov: expected,
            min_abs_det: g.min_abs_det(),
            pass,
        });
        Ok(())
    }

    fn run_kernel(&mut self) -> anyhow::Result<()> {
        let Some((v, c)) = self.disc_witnesses("kernel") else { return Ok(()) };
        let quadric = DefiningFunction::quadric(self.pencil.clone());
        let base = build_initial_lift(&self.pencil, &v, &c, self.cfg.m_grid)?.realize();
        let g = assemble_g(&quadric, &base, &c, self.cfg.m_grid)?;
        let constrained = numeric_kernel(&g, true, self.cfg.n_f)?;
        let unconstrained = numeric_kernel(&g, false, self.cfg.n_f)?;
        let (n, d) = (self.pencil.n(), self.pencil.d());
        let expected_c = 2 * n + 2 * d;
        let expected_u = 4 * n + 4 * d;
        let mut pass = constrained.dim == expected_c && unconstrained.dim == expected_u;

        let explicit_worst_angle = if self.witness_v.is_some() {
            let explicit = explicit_kernel_basis(&self.pencil, &v, &c, self.cfg.m_grid)?;
            let na: Vec<Vec<f64>> =
                constrained.basis.iter().map(|b| b.flatten_real(self.cfg.n_f)).collect();
            let nb: Vec<Vec<f64>> =
                explicit.basis.iter().map(|b| b.flatten_real(self.cfg.n_f)).collect();
            let angles = disclab::linalg::principal_angles(&na, &nb)?;
            let worst = angles.last().copied().unwrap_or(0.0);
            pass = pass && worst < 1e-6;
            Some(worst)
        } else {
            None
        };

        let mut csv = String::from("mode,index,sigma\n");
        for (i, s) in constrained.smallest_singular_values.iter().enumerate() {
            csv.push_str(&format!("constrained,{i},{s:.17e}\n"));
        }
        for (i, s) in unconstrained.smallest_singular_values.iter().enumerate() {
            csv.push_str(&format!("unconstrained,{i},{s:.17e}\n"));
        }
        self.write_artifact("kernel_singular_values.csv", &csv)?;
        println!("constrained dim {}, unconstrained dim {}", constrained.dim, unconstrained.dim);
        self.record(
            "kernel",
            pass,
            format!(
                "kernel: constrained {}/{} unconstrained {}/{} gaps {:.2e}/{:.2e}",
                constrained.dim,
                expected_c,
                unconstrained.dim,
                expected_u,
                constrained.gap_ratio,
                unconstrained.gap_ratio
            ),
        );
        self.results.kernel = Some(KernelResult {
            constrained_dim: constrained.dim,
            unconstrained_dim: unconstrained.dim,
            expected_constrained: expected_c,
            expected_unconstrained: expected_u,
            gap_ratio_constrained: constrained.gap_ratio,
            gap_ratio_unconstrained: unconstrained.gap_ratio,
            explicit_worst_angle,
            pass,
        });
        Ok(())
    }

    fn run_solve(&mut self) -> anyhow::Result<()> {
        let chart = match self.explicit_chart(&self.def.clone()) {
            Ok(c) => c,
            Err(e) => {
                self.skip("solve", &e.to_string());
                return Ok(());
            }
        };
        let out = chart.solve_traced(&vec![0.0; chart.dim()])?;
        let report = verify_stationary(&self.def, &out.lift.realize(), 1e-8)?;
        let iterations = out.trace.steps.len().saturating_sub(1);
        let pass = report.attachment_sup < self.tol && report.lift_defect < self.tol;
        self.write_artifact("solve_trace.csv", &out.trace.to_csv())?;
        self.write_artifact("solved_disc.json", &serde_json::to_string_pretty(&out.lift)?)?;
        self.record(
            "solve",
            pass,
            format!(
                "solve: t={} iterations={} residual={:.3e} attachment={:.3e}",
                self.def.t(),
                iterations,
                out.trace.final_residual(),
                report.attachment_sup
            ),
        );
        self.results.solve = Some(SolveResult {
            t: self.def.t(),
            iterations,
            final_residual: out.trace.final_residual(),
            attachment_sup: report.attachment_sup,
            lift_defect: report.lift_defect,
            pass,
        });
        Ok(())
    }

    fn run_centers(&mut self) -> anyhow::Result<()> {
        let Some(c) = self.witness_c.clone() else {
            self.skip("centers", "condition (t) not detected");
            return Ok(());
        };
        // The explicit chart when (f) holds; otherwise a synthetic chart on
        // the numeric kernel so the rank-deficient side of the dichotomy is
        // observable.
        let (chart, v_used) = match &self.witness_v {
            Some(v) => (self.explicit_chart(&self.def.clone())?, v.clone()),
            None => {
                let mut v = vec![C64::new(0.0, 0.0); self.pencil.n()];
                v[0] = C64::new(1.0, 0.0);
                let base = build_initial_lift(&self.pencil, &v, &c, self.cfg.m_grid)?;
                let quadric = DefiningFunction::quadric(self.pencil.clone());
                let g = assemble_g(&quadric, &base.realize(), &c, self.cfg.m_grid)?;
                let kernel = numeric_kernel(&g, true, self.cfg.n_f)?;
                (
                    FamilyChart::with_basis(
                        self.def.clone(),
                        base,
                        kernel,
                        self.epsilon,
                        self.cfg.clone(),
                    )?,
                    v,
                )
            }
        };
        let report = center_jacobian(&chart)?;
        let gram = gram_d(&self.pencil, &v_used)?;
        let expected = 2 * self.pencil.n() + 2 * self.pencil.d();
        let equivalence = (report.rank == expected) == gram.positive_definite;
        self.write_artifact("centers_singular_values.csv", &report.singular_values_csv())?;
        self.record(
            "centers",
            equivalence,
            format!(
                "centers: rank {}/{} gram_pd={} (equivalence {})",
                report.rank, expected, gram.positive_definite, equivalence
            ),
        );
        self.results.centers = Some(CentersResult {
            rank: report.rank,
            expected,
            singular_values: report.singular_values,
            gram_positive_definite: gram.positive_definite,
            equivalence_holds: equivalence,
            pass: equivalence,
        });
        Ok(())
    }

    fn run_jets(&mut self) -> anyhow::Result<()> {
        let chart = match self.explicit_chart(&self.def.clone()) {
            Ok(c) => c,
            Err(e) => {
                self.skip("jets", &e.to_string());
                return Ok(());
            }
        };
        let report = jet_jacobian(&chart)?;
        let expected = 2 * self.pencil.n() + 2 * self.pencil.d();
        // One deterministic recovery round trip.
        let mut s_true = vec![0.0; chart.dim()];
        for (i, v) in s_true.iter_mut().enumerate() {
            *v = 0.01 * (1.0 + i as f64) / chart.dim() as f64;
        }
        let target = jet_map(&chart, &s_true)?;
        let recovered = recover_from_jet(&chart, &target, &vec![0.0; chart.dim()])?;
        let roundtrip =
            recovered.iter().zip(&s_true).map(|(a, b)| (a - b).abs()).fold(0.0_f64, f64::max);
        let pass = report.rank == expected && roundtrip < 1e-8;
        self.write_artifact("jets_singular_values.csv", &report.singular_values_csv())?;
        self.record(
            "jets",
            pass,
            format!("jets: rank {}/{} roundtrip={:.3e}", report.rank, expected, roundtrip),
        );
        self.results.jets =
            Some(JetsResult { rank: report.rank, expected, roundtrip_error: roundtrip, pass });
        Ok(())
    }

    fn run_determine(&mut self) -> anyhow::Result<()> {
        let m_t = dilate(&self.def, self.t_dil)?;
        let chart = match self.explicit_chart(&m_t) {
            Ok(c) => c,
            Err(e) => {
                self.skip("determine", &e.to_string());
                return Ok(());
            }
        };
        let map = self.automorphism()?;
        let opts = ExperimentOptions {
            t_dil: self.t_dil,
            seed: self.scenario.seed,
            ..ExperimentOptions::default()
        };
        let report = jet_determination_experiment(&self.def, &map, &chart, &opts)?;
        let expected = self.scenario.expect_experiment;
        let outcome_ok = match expected {
            ExperimentExpectation::Accepted => {
                report.accepted && report.failures == 0 && report.max_fixed_point_defect < 1e-8
            }
            ExperimentExpectation::Rejected => !report.accepted,
        };
        let summary = if report.accepted {
            format!(
                "determine: accepted, {} records, fixed-point defect {:.3e}, jet defect {:.3e}",
                report.records.len(),
                report.max_fixed_point_defect,
                report.max_jet_defect
            )
        } else {
            format!("determine: rejected ({})", report.rejection_reason.clone().unwrap_or_default())
        };
        self.write_artifact("experiment.json", &report.to_json())?;
        self.record("determine", outcome_ok, summary);
        self.results.determine = Some(DetermineResult { expected, report, pass: outcome_ok });
        Ok(())
    }

    fn finish(mut self) -> anyhow::Result<ExitCode> {
        let ok = self.failures.is_empty() && self.skipped.is_empty();
        let status = if ok { "ok" } else { "failed" };
        for s in &self.skipped {
            self.failures.push(format!("{}: skipped ({})", s.analysis, s.reason));
        }
        let report = Report {
            schema_version: 1,
            seed: self.scenario.seed,
            inputs: self.scenario.clone(),
            results: self.results,
            artifacts: self.artifacts.clone(),
            skipped: self.skipped,
            failures: self.failures,
            status: status.into(),
        };
        if let Some(dir) = &self.outdir {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
        }
        Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
    }
}

fn load_scenario(args: &CommonArgs) -> anyhow::Result<Scenario> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let scenario: Scenario = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.config.display()))?;
    for a in &scenario.analyses {
        if !KNOWN_ANALYSES.contains(&a.as_str()) {
            return Err(anyhow!("unknown analysis '{a}' in scenario"));
        }
    }
    Ok(scenario)
}

fn execute(args: &CommonArgs, forced: Option<&str>) -> anyhow::Result<ExitCode> {
    let mut scenario = load_scenario(args)?;
    if let Some(name) = forced {
        scenario.analyses = vec![name.to_string()];
    }
    let mut analyses = scenario.analyses.clone();
    analyses.sort_by_key(|a| analysis_order(a));
    analyses.dedup();
    let mut runner = Runner::new(scenario, args)?;
    for analysis in &analyses {
        runner.run_analysis(analysis)?;
    }
    runner.finish()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, forced) = match &cli.command {
        Command::Run(a) => (a, None),
        Command::Check(a) => (a, Some("check")),
        Command::Disc(a) => (a, Some("disc")),
        Command::Indices(a) => (a, Some("indices")),
        Command::Kernel(a) => (a, Some("kernel")),
        Command::Solve(a) => (a, Some("solve")),
        Command::Centers(a) => (a, Some("centers")),
        Command::Jets(a) => (a, Some("jets")),
        Command::Determine(a) => (a, Some("determine")),
    };
    match execute(args, forced) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
