//! One function per subcommand. Each writes the manifest, loads its inputs,
//! runs one library stage and writes its result files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use envymarket_core::econometrics::{
    cluster_bootstrap, fit_did, read_panel_csv, run_placebo, spec_curve, standard_variants, subgroup_table,
    write_panel_csv, write_spec_curve_csv, write_subgroup_csv, DidSpec, PanelRecord, SubgroupFilter,
};
use envymarket_core::envy::{
    audit_empirical_envy, audit_invariant_justified_envy, audit_justified_envy, write_records_csv, write_summary_csv,
    EmpiricalEnvySummary,
};
use envymarket_core::equilibrium::{
    decompose_comparative_statics, demand_profile, multistart, solve_equilibrium, Parameter, SolverOptions,
};
use envymarket_core::market::{check_feasibility, Economy, MatchOutcome};
use envymarket_core::mechanisms::{run_mechanism, Rols};
use envymarket_core::policy::{
    generate_cohort, generate_panel, run_counterfactual, write_moves_csv, write_rep_csv, write_table_csv, Cohort,
    CounterfactualOptions, CounterfactualReport,
};
use envymarket_core::scenario::{parse_scenario, to_normalized_json, Scenario};
use envymarket_core::seed::{derive, Stream};
use serde::Serialize;

use crate::manifest::ManifestBuilder;
use crate::{
    Cli, CliError, Command, CounterfactualArgs, DidArgs, EconomySource, EquilibriumArgs, GenerateArgs, MatchArgs,
    PanelSource, SweepArgs,
};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<()> {
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::Generate(a) => generate(a, out),
        Command::Match(a) => match_cmd(a, out, false),
        Command::Audit(a) => match_cmd(a, out, true),
        Command::Equilibrium(a) => equilibrium(a, out),
        Command::Did(a) => did(a, out),
        Command::Counterfactual(a) => counterfactual(a, out),
        Command::Sweep(a) => sweep(a, out),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(format!("creating {}", parent.display()), e))?;
    }
    let f = File::create(&path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(envymarket_core::Error::from)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(format!("writing {name}"), e))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let mut w = create(dir, name)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| CliError::io(format!("writing {name}"), e))
}

fn write_csv_with(
    dir: &Path,
    name: &str,
    f: impl FnOnce(&mut BufWriter<File>) -> envymarket_core::Result<()>,
) -> Result<()> {
    let mut w = create(dir, name)?;
    f(&mut w)?;
    w.flush().map_err(|e| CliError::io(format!("writing {name}"), e))
}

/// Parses a scenario, overriding the master seed when given.
fn scenario_from(bytes: &[u8], seed: Option<u64>) -> Result<Scenario> {
    let mut s = parse_scenario(&String::from_utf8_lossy(bytes))?;
    if let Some(seed) = seed {
        s.config.simulation.master_seed = seed;
    }
    Ok(s)
}

fn default_year(s: &Scenario, year: Option<i32>) -> Result<i32> {
    let cohorts = &s.config.population.cohorts;
    let y = year
        .or(s.config.simulation.counterfactual_year)
        .or_else(|| cohorts.iter().copied().max())
        .ok_or_else(|| CliError::Invalid("scenario has no cohorts".into()))?;
    if !cohorts.contains(&y) {
        return Err(CliError::Invalid(format!("{y} is not a cohort year")));
    }
    Ok(y)
}

fn lottery_seed(s: &Scenario, year: i32) -> u64 {
    derive(s.config.simulation.master_seed, Stream::Lottery, year as u32 as u64)
}

/// An economy with, for scenario input, the cohort it came from.
struct Loaded {
    economy: Economy,
    cohort: Option<Cohort>,
    scenario: Option<Scenario>,
    year: Option<i32>,
}

fn economy_manifest(mb: &mut ManifestBuilder, src: &EconomySource) -> Result<Vec<u8>> {
    match (&src.scenario, &src.economy) {
        (Some(p), _) => {
            mb.manifest.scenario = Some(p.clone());
            mb.input(p)
        }
        (None, Some(p)) => {
            mb.manifest.economy = Some(p.clone());
            mb.input(p)
        }
        (None, None) => Err(CliError::Invalid("one of --scenario or --economy is required".into())),
    }
}

fn load_economy(src: &EconomySource, bytes: &[u8], year: Option<i32>) -> Result<Loaded> {
    if src.scenario.is_some() {
        let s = scenario_from(bytes, None)?;
        let y = default_year(&s, year)?;
        let cohort = generate_cohort(&s, y)?;
        Ok(Loaded { economy: cohort.economy.clone(), cohort: Some(cohort), scenario: Some(s), year: Some(y) })
    } else {
        let economy = Economy::from_json(&String::from_utf8_lossy(bytes))?;
        let violations = envymarket_core::market::validate_economy(&economy);
        if let Some(v) = violations.first() {
            return Err(CliError::Invalid(format!("invalid economy ({} violations), first: {v:?}", violations.len())));
        }
        Ok(Loaded { economy, cohort: None, scenario: None, year: None })
    }
}

// ---------------------------------------------------------------- generate

#[derive(Serialize)]
struct WorldSummary<'a> {
    cities: &'a [envymarket_core::market::Address],
    municipality_centers: &'a [envymarket_core::market::Address],
    schools: &'a [envymarket_core::market::School],
    quality: &'a [f64],
    demand_index: &'a [f64],
    supply_index: &'a [f64],
    treated_municipalities: Vec<usize>,
    income_median: f64,
    education_median: f64,
}

#[derive(Serialize)]
struct CohortSummary {
    year: i32,
    post: bool,
    w: f64,
    n_students: usize,
    n_moves: usize,
    n_household_moves: usize,
    n_flipped: usize,
    n_strategic: usize,
    anticipated_cutoffs: envymarket_core::market::CutoffVector,
}

fn generate(a: &GenerateArgs, out: &Path) -> Result<()> {
    let mut mb = ManifestBuilder::new("generate", out, a.seed);
    mb.manifest.scenario = Some(a.scenario.clone());
    let bytes = mb.input(&a.scenario)?;
    mb.arg(&format!("seed={:?}", a.seed));
    mb.write(out)?;

    let s = scenario_from(&bytes, a.seed)?;
    let (world, cohorts, panel) = generate_panel(&s)?;
    write_text(out, "scenario.json", &(to_normalized_json(&s.config) + "\n"))?;
    write_json(
        out,
        "world.json",
        &WorldSummary {
            cities: &world.cities,
            municipality_centers: &world.municipality_centers,
            schools: &world.schools,
            quality: &world.quality,
            demand_index: &world.demand_index,
            supply_index: &world.supply_index,
            treated_municipalities: world.treated.iter().enumerate().filter(|(_, &t)| t).map(|(m, _)| m).collect(),
            income_median: world.income_median,
            education_median: world.education_median,
        },
    )?;
    write_csv_with(out, "panel.csv", |w| write_panel_csv(&panel, w))?;
    let mut summaries = Vec::with_capacity(cohorts.len());
    for c in &cohorts {
        let dir = out.join("cohorts").join(c.year.to_string());
        write_text(&dir, "economy.json", &(c.economy.to_json()? + "\n"))?;
        write_csv_with(&dir, "rols.csv", |w| c.rols.write_csv(w))?;
        write_csv_with(&dir, "moves.csv", |w| write_moves_csv(&c.events, w))?;
        summaries.push(CohortSummary {
            year: c.year,
            post: c.post,
            w: c.economy.w,
            n_students: c.economy.n_students(),
            n_moves: c.events.len(),
            n_household_moves: c.events.iter().filter(|e| e.household_move).count(),
            n_flipped: c.flipped.iter().filter(|&&f| f).count(),
            n_strategic: c.strategic.iter().filter(|&&f| f).count(),
            anticipated_cutoffs: c.anticipated_cutoffs.clone(),
        });
    }
    write_json(out, "cohorts.json", &summaries)?;
    log::info!("generated {} cohorts, {} panel rows", cohorts.len(), panel.len());
    Ok(())
}

// ------------------------------------------------------------ match / audit

#[derive(Serialize)]
struct MatchSummary {
    mechanism: String,
    seed: u64,
    year: Option<i32>,
    actions: &'static str,
    n_students: usize,
    assigned_mass: f64,
    unmatched_mass: f64,
    deceived_mass: f64,
    /// Sum over students of mass · (utility of assignment − γ · deceived).
    welfare: f64,
    feasible: bool,
}

#[derive(Serialize)]
struct AuditSummary {
    mechanism: String,
    seed: u64,
    year: Option<i32>,
    justified_envy: usize,
    invariant_justified_envy: usize,
    justified_enviers: usize,
    invariant_enviers: usize,
    empirical: Option<EmpiricalEnvySummary>,
}

fn write_assignment_csv(e: &Economy, m: &MatchOutcome, w: &mut BufWriter<File>) -> envymarket_core::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["student_id", "school_id", "action", "deceived"])?;
    for (k, (sid, school)) in m.assignment.iter().enumerate() {
        debug_assert_eq!(*sid, e.students[k].id);
        out.write_record([
            sid.0.to_string(),
            school.map(|s| s.0.to_string()).unwrap_or_default(),
            m.chosen_action[k].to_string(),
            (m.deceived[k] as u8).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

fn match_cmd(a: &MatchArgs, out: &Path, audit: bool) -> Result<()> {
    let name = if audit { "audit" } else { "match" };
    let mut mb = ManifestBuilder::new(name, out, a.seed);
    let bytes = economy_manifest(&mut mb, &a.source)?;
    let rol_bytes = a.rols.as_ref().map(|p| mb.input(p)).transpose()?;
    mb.arg(&format!(
        "year={:?} mechanism={:?} seed={:?} best_response={}",
        a.year, a.mechanism, a.seed, a.best_response
    ));
    mb.write(out)?;

    let loaded = load_economy(&a.source, &bytes, a.year)?;
    let e = &loaded.economy;
    let rols = match (&rol_bytes, &loaded.cohort) {
        (Some(b), _) => Rols::read_csv(b.as_slice())?,
        (None, Some(c)) => c.rols.clone(),
        (None, None) => Rols::truthful(e, None),
    };
    rols.validate(e, None)?;
    let (actions, action_source) = if a.best_response {
        let eq = solve_equilibrium(e, &SolverOptions::default());
        if !eq.converged {
            return Err(CliError::NotConverged(format!("best-response cutoffs, residual {}", eq.residual)));
        }
        (demand_profile(e, &eq.cutoffs).iter().map(|d| d.action_used).collect(), "best_response")
    } else if let Some(c) = &loaded.cohort {
        (c.baseline_actions.clone(), "registered")
    } else {
        (vec![0; e.n_students()], "null")
    };
    let seed = match (a.seed, &loaded.scenario, loaded.year) {
        (Some(s), _, _) => s,
        (None, Some(s), Some(y)) => lottery_seed(s, y),
        _ => 0,
    };
    let mechanism = a.mechanism.into();
    let m = run_mechanism(e, mechanism, &rols, &actions, seed)?;
    let assignment = m.school_indices(e)?;

    if !audit {
        let mut welfare = 0.0;
        let mut assigned = 0.0;
        let mut deceived = 0.0;
        for (i, st) in e.students.iter().enumerate() {
            let cost = if m.deceived[i] { e.gamma_for(i) } else { 0.0 };
            welfare += st.weight * (st.utility_of(assignment[i]) - cost);
            if assignment[i].is_some() {
                assigned += st.weight;
            }
            if m.deceived[i] {
                deceived += st.weight;
            }
        }
        write_text(out, "match.json", &(m.to_json()? + "\n"))?;
        write_csv_with(out, "assignment.csv", |w| write_assignment_csv(e, &m, w))?;
        return write_json(
            out,
            "match_summary.json",
            &MatchSummary {
                mechanism: mechanism.to_string(),
                seed,
                year: loaded.year,
                actions: action_source,
                n_students: e.n_students(),
                assigned_mass: assigned,
                unmatched_mass: e.total_mass() - assigned,
                deceived_mass: deceived,
                welfare,
                feasible: check_feasibility(e, &m),
            },
        );
    }

    let justified = audit_justified_envy(e, &m)?;
    let invariant = audit_invariant_justified_envy(e, &m)?;
    let mut records = justified.clone();
    records.extend(invariant.iter().cloned());
    let empirical = match &loaded.cohort {
        Some(c) => {
            // Household moves are not manipulation; every other registered
            // non-null action is.
            let household: BTreeSet<_> = c.events.iter().filter(|ev| ev.household_move).map(|ev| ev.student).collect();
            let movers: BTreeSet<_> = e
                .students
                .iter()
                .zip(&m.chosen_action)
                .filter(|(st, &a)| a != 0 && !household.contains(&st.id))
                .map(|(st, _)| st.id)
                .collect();
            let report = audit_empirical_envy(e, &m, &rols, &movers)?;
            records.extend(report.records.iter().cloned());
            write_csv_with(out, "envy_summary.csv", |w| write_summary_csv(&report.summary, w))?;
            Some(report.summary)
        }
        None => None,
    };
    let enviers = |r: &[envymarket_core::envy::EnvyRecord]| r.iter().map(|x| x.envier).collect::<BTreeSet<_>>().len();
    write_csv_with(out, "envy_records.csv", |w| write_records_csv(&records, w))?;
    write_json(
        out,
        "audit.json",
        &AuditSummary {
            mechanism: mechanism.to_string(),
            seed,
            year: loaded.year,
            justified_envy: justified.len(),
            invariant_justified_envy: invariant.len(),
            justified_enviers: enviers(&justified),
            invariant_enviers: enviers(&invariant),
            empirical,
        },
    )
}

// ------------------------------------------------------------- equilibrium

#[derive(Serialize)]
struct EquilibriumReport<'a> {
    year: Option<i32>,
    n_students: usize,
    n_schools: usize,
    total_mass: f64,
    converged: bool,
    result: &'a envymarket_core::equilibrium::EquilibriumResult,
    multistart: Option<MultistartSummary>,
}

#[derive(Serialize)]
struct MultistartSummary {
    starts: usize,
    agree: bool,
    max_discrepancy: f64,
    agreement_tol: f64,
    converged: Vec<bool>,
    iterations: Vec<usize>,
}

fn equilibrium(a: &EquilibriumArgs, out: &Path) -> Result<()> {
    let mut mb = ManifestBuilder::new("equilibrium", out, Some(a.seed));
    let bytes = economy_manifest(&mut mb, &a.source)?;
    mb.arg(&format!(
        "year={:?} multistart={} seed={} max_iter={:?} decompose={}",
        a.year, a.multistart, a.seed, a.max_iter, a.decompose
    ));
    mb.write(out)?;

    if a.multistart == 0 {
        return Err(CliError::Invalid("--multistart must be at least 1".into()));
    }
    let loaded = load_economy(&a.source, &bytes, a.year)?;
    let e = &loaded.economy;
    let opts = SolverOptions { max_iter: a.max_iter, ..Default::default() };
    let report = multistart(e, a.multistart, a.seed, &opts);
    let result = &report.runs[0];
    let ms = (a.multistart > 1).then(|| MultistartSummary {
        starts: report.runs.len(),
        agree: report.agree,
        max_discrepancy: report.max_discrepancy,
        agreement_tol: report.agreement_tol,
        converged: report.runs.iter().map(|r| r.converged).collect(),
        iterations: report.runs.iter().map(|r| r.iterations).collect(),
    });
    if ms.as_ref().is_some_and(|m| !m.agree) {
        log::warn!("multistart runs disagree (max discrepancy {})", report.max_discrepancy);
    }
    write_csv_with(out, "cutoffs.csv", |w| {
        let mut c = csv_writer(w);
        c.write_record(["school_id", "capacity", "cutoff", "demand"])?;
        for (s, school) in e.schools.iter().enumerate() {
            let cut = result.cutoffs.get(s).value().map(|v| v.to_string()).unwrap_or_else(|| "unconstrained".into());
            c.write_record([
                school.id.0.to_string(),
                school.capacity.to_string(),
                cut,
                result.aggregate_demand[s].to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    write_json(
        out,
        "equilibrium.json",
        &EquilibriumReport {
            year: loaded.year,
            n_students: e.n_students(),
            n_schools: e.n_schools(),
            total_mass: e.total_mass(),
            converged: result.converged,
            result,
            multistart: ms,
        },
    )?;
    if !result.converged {
        return Err(CliError::NotConverged(format!(
            "{} sweeps, residual {} (partial results written with converged=false)",
            result.iterations, result.residual
        )));
    }
    if a.decompose {
        let decomps = [Parameter::W, Parameter::Gamma]
            .into_iter()
            .filter_map(|p| {
                let h = p.default_step(e);
                match decompose_comparative_statics(e, p, h, &opts) {
                    Ok(d) => Some(Ok(d)),
                    // A step wider than the domain allows no difference either way.
                    Err(envymarket_core::Error::InvalidInput(msg)) => {
                        log::warn!("skipping {p:?} decomposition: {msg}");
                        None
                    }
                    Err(err) => Some(Err(err)),
                }
            })
            .collect::<envymarket_core::Result<Vec<_>>>()?;
        write_json(out, "decomposition.json", &decomps)?;
    }
    Ok(())
}

// --------------------------------------------------------------- panels

fn panel_manifest(mb: &mut ManifestBuilder, src: &PanelSource) -> Result<Vec<u8>> {
    match (&src.panel, &src.scenario) {
        (Some(p), _) => {
            mb.manifest.panel = Some(p.clone());
            mb.input(p)
        }
        (None, Some(p)) => {
            mb.manifest.scenario = Some(p.clone());
            mb.input(p)
        }
        (None, None) => Err(CliError::Invalid("one of --panel or --scenario is required".into())),
    }
}

fn load_panel(src: &PanelSource, bytes: &[u8], seed: Option<u64>) -> Result<Vec<PanelRecord>> {
    if src.panel.is_some() {
        Ok(read_panel_csv(bytes)?)
    } else {
        let s = scenario_from(bytes, seed)?;
        Ok(generate_panel(&s)?.2)
    }
}

#[derive(Serialize)]
struct DidReport {
    n_obs: usize,
    pooled: envymarket_core::econometrics::DidResult,
    placebo: Option<envymarket_core::econometrics::RegressionFit>,
    bootstrap: Option<envymarket_core::econometrics::BootstrapSummary>,
    subgroups: Option<Vec<envymarket_core::econometrics::SubgroupRow>>,
}

fn did(a: &DidArgs, out: &Path) -> Result<()> {
    let mut mb = ManifestBuilder::new("did", out, a.seed);
    let bytes = panel_manifest(&mut mb, &a.source)?;
    mb.arg(&format!("subgroups={} placebo={} bootstrap={} seed={:?}", a.subgroups, a.placebo, a.bootstrap, a.seed));
    mb.write(out)?;

    let panel = load_panel(&a.source, &bytes, a.seed)?;
    let spec = DidSpec::default();
    let pooled = fit_did(&panel, &SubgroupFilter::default(), &spec)?;
    let placebo = a.placebo.then(|| run_placebo(&panel, &spec)).transpose()?;
    let bootstrap =
        (a.bootstrap > 0).then(|| cluster_bootstrap(&panel, &spec, a.bootstrap, a.seed.unwrap_or(0))).transpose()?;
    let subgroups = (a.subgroups == 8).then(|| subgroup_table(&panel, &spec));
    if let Some(rows) = &subgroups {
        write_csv_with(out, "subgroups.csv", |w| write_subgroup_csv(rows, w))?;
    }
    write_json(out, "did.json", &DidReport { n_obs: panel.len(), pooled, placebo, bootstrap, subgroups })
}

fn sweep(a: &SweepArgs, out: &Path) -> Result<()> {
    let mut mb = ManifestBuilder::new("sweep", out, a.seed);
    let bytes = panel_manifest(&mut mb, &a.source)?;
    mb.arg(&format!("seed={:?}", a.seed));
    mb.write(out)?;

    let panel = load_panel(&a.source, &bytes, a.seed)?;
    let rows = spec_curve(&panel, &standard_variants())?;
    write_csv_with(out, "spec_curve.csv", |w| write_spec_curve_csv(&rows, w))?;
    write_json(out, "spec_curve.json", &rows)
}

// ---------------------------------------------------------- counterfactual

#[derive(Serialize)]
struct ProbabilitySource {
    subgroup: u8,
    label: String,
    probability: f64,
    source: &'static str,
}

#[derive(Serialize)]
struct CounterfactualOutput<'a> {
    year: i32,
    mechanism: String,
    probabilities: &'a [ProbabilitySource],
    report: &'a CounterfactualReport,
}

/// Subgroup manipulation probabilities: configured values first, then the
/// per-cell estimate, then the pooled estimate for cells whose regression fails.
fn subgroup_probabilities(s: &Scenario, panel: &[PanelRecord]) -> Result<Vec<ProbabilitySource>> {
    use envymarket_core::econometrics::Subgroup;
    let configured = s.config.simulation.subgroup_probs.clone().unwrap_or_default();
    let need_estimate = Subgroup::all().any(|g| !configured.contains_key(&g.index()));
    let spec = DidSpec::default();
    let (table, pooled) = if need_estimate {
        let pooled = fit_did(panel, &SubgroupFilter::default(), &spec).map(|d| d.share);
        (subgroup_table(panel, &spec), Some(pooled))
    } else {
        (Vec::new(), None)
    };
    let mut out = Vec::with_capacity(8);
    for g in Subgroup::all() {
        let k = g.index();
        let (probability, source) = if let Some(&p) = configured.get(&k) {
            (p, "configured")
        } else if let Some(r) = table.iter().find(|r| r.subgroup == g).and_then(|r| r.result.as_ref()) {
            (r.share, "estimated")
        } else {
            match pooled.as_ref().expect("estimated when needed") {
                Ok(p) => {
                    log::warn!("subgroup {} estimate failed; using pooled share {p}", g.label());
                    (*p, "pooled")
                }
                Err(err) => {
                    log::warn!("subgroup {} and pooled estimates failed ({err}); using 0", g.label());
                    (0.0, "zero")
                }
            }
        };
        out.push(ProbabilitySource { subgroup: k, label: g.label(), probability, source });
    }
    Ok(out)
}

fn counterfactual(a: &CounterfactualArgs, out: &Path) -> Result<()> {
    let mut mb = ManifestBuilder::new("counterfactual", out, a.seed);
    mb.manifest.scenario = Some(a.scenario.clone());
    let bytes = mb.input(&a.scenario)?;
    mb.arg(&format!(
        "reps={:?} seed={:?} mechanism={:?} year={:?} covariates={:?} peers={:?}",
        a.reps, a.seed, a.mechanism, a.year, a.covariate_mode, a.peer_mode
    ));
    mb.write(out)?;

    let s = scenario_from(&bytes, a.seed)?;
    let year = default_year(&s, a.year)?;
    let (_, cohorts, panel) = generate_panel(&s)?;
    let cohort = cohorts.iter().find(|c| c.year == year).expect("year validated against cohorts");
    let probs = subgroup_probabilities(&s, &panel)?;
    let prob_map: BTreeMap<u8, f64> = probs.iter().map(|p| (p.subgroup, p.probability)).collect();
    let opts = CounterfactualOptions {
        reps: a.reps.unwrap_or(s.config.simulation.manipulation_reps),
        master_seed: s.config.simulation.master_seed,
        mechanism: a.mechanism.into(),
        covariate_mode: a.covariate_mode.into(),
        peer_mode: a.peer_mode.into(),
    };
    let report = run_counterfactual(&cohort.economy, &cohort.rols, &cohort.events, &prob_map, &opts)?;
    write_json(
        out,
        "counterfactual.json",
        &CounterfactualOutput { year, mechanism: opts.mechanism.to_string(), probabilities: &probs, report: &report },
    )?;
    write_csv_with(out, "winners_losers.csv", |w| write_table_csv(&report, w))?;
    write_csv_with(out, "envy_shares.csv", |w| write_rep_csv(&report, w))?;
    write_csv_with(out, "envy_histogram.csv", |w| {
        let mut c = csv_writer(w);
        c.write_record(["bin_lower", "bin_upper", "reps"])?;
        for (lo, hi, n) in histogram(report.per_rep.iter().map(|r| r.envy_share), 20) {
            c.write_record([lo.to_string(), hi.to_string(), n.to_string()])?;
        }
        c.flush()?;
        Ok(())
    })
}

/// Equal-width bins on `[0, 1]`; the last bin is closed.
fn histogram(values: impl Iterator<Item = f64>, bins: usize) -> Vec<(f64, f64, usize)> {
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = ((v * bins as f64).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts.into_iter().enumerate().map(|(b, n)| (b as f64 / bins as f64, (b + 1) as f64 / bins as f64, n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_closes_last_bin() {
        let h = histogram([0.0, 0.5, 1.0, 0.99].into_iter(), 4);
        assert_eq!(h.iter().map(|b| b.2).collect::<Vec<_>>(), vec![1, 0, 1, 2]);
        assert_eq!(h[3].1, 1.0);
    }
}
