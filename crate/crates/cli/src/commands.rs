use crate::input::{align_to_tree, read_design, read_numeric_rows, read_vector};
use crate::manifest::{flat_json, Manifest};
use crate::{CutModeArg, CvArgs, DataArgs, FitArgs, LinkageArg, Preset, SimulateCommand, SweepArgs, TreeCommand, VerifyCommand};
use anyhow::{bail, Context, Result};
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;
use treeagg::admm::{default_grid, AdmmSolver, FitConfig, FitResult};
use treeagg::experiments::{self, ExperimentSpec, SweepOptions, TableRow};
use treeagg::linop::normalize_for_theory;
use treeagg::selection::kfold_cv;
use treeagg::tree::{build_tree_hclust, cut_tree, read_tree_csv, write_tree_csv, BuildOptions, CutMode, Linkage};
use treeagg::{CountDesign, FeatureTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    NotConverged = 2,
}

struct Loaded {
    x: CountDesign,
    y: nalgebra::DVector<f64>,
    tree: FeatureTree,
}

fn read_tree(path: &Path) -> Result<FeatureTree> {
    let file = File::open(path).with_context(|| format!("--tree: cannot open {}", path.display()))?;
    read_tree_csv(file, BuildOptions::default()).with_context(|| format!("--tree: {}", path.display()))
}

fn load(d: &DataArgs, m: &mut Manifest) -> Result<Loaded> {
    let y = read_vector(&d.y).context("--y")?;
    let tree = read_tree(&d.tree)?;
    let design = read_design(&d.x, Some((y.len(), tree.leaf_count()))).context("--x")?;
    let mut x = align_to_tree(design, &tree)?;
    if x.nrows() != y.len() {
        bail!("--x has {} rows but --y has {} values", x.nrows(), y.len());
    }
    if d.normalize {
        x = normalize_for_theory(&x)?;
    }
    for p in [&d.x, &d.y, &d.tree] {
        m.input(p);
    }
    m.set("normalize", d.normalize);
    m.set("intercept", d.intercept);
    m.set("rho", d.rho);
    m.set("eps_abs", d.eps_abs);
    m.set("eps_rel", d.eps_rel);
    m.set("max_iter", d.max_iter as u64);
    Ok(Loaded { x, y, tree })
}

fn base_config(d: &DataArgs) -> FitConfig {
    FitConfig {
        rho: d.rho,
        eps_abs: d.eps_abs,
        eps_rel: d.eps_rel,
        max_iter: d.max_iter,
        intercept: d.intercept,
        ..FitConfig::default()
    }
}

fn write_fit(m: &mut Manifest, data: &Loaded, fit: &FitResult, extra: &[(&str, Value)]) -> Result<Status> {
    let tree = &data.tree;
    let mut beta = String::from("feature_id,coefficient\n");
    for (j, b) in fit.beta.iter().enumerate() {
        writeln!(beta, "{},{}", tree.label(j), b)?;
    }
    let mut gamma = String::from("node_id,coefficient\n");
    for (u, g) in fit.gamma.iter().enumerate() {
        writeln!(gamma, "{},{}", tree.label(u), g)?;
    }
    m.write("beta.csv", &beta)?;
    m.write("gamma.csv", &gamma)?;
    let mut pairs = vec![
        ("lambda", json!(fit.lambda)),
        ("alpha", json!(fit.alpha)),
        ("intercept", json!(fit.intercept)),
        ("iterations", json!(fit.iterations)),
        ("converged", json!(fit.converged)),
        ("primal_residual", json!(fit.primal_residual)),
        ("dual_residual", json!(fit.dual_residual)),
        ("objective", json!(fit.objective)),
        ("n", json!(data.x.nrows())),
        ("p", json!(data.x.ncols())),
        ("nodes", json!(tree.node_count())),
        ("nonzero_beta", json!(fit.beta.iter().filter(|&&b| b != 0.0).count())),
        ("nonzero_gamma", json!(fit.gamma.iter().filter(|&&g| g != 0.0).count())),
        ("design_scale", json!(data.x.scale_factor())),
    ];
    pairs.extend(extra.iter().cloned());
    m.write("fit.json", &flat_json(&pairs))?;
    if fit.converged {
        Ok(Status::Ok)
    } else {
        eprintln!("warning: no convergence after {} iterations", fit.iterations);
        Ok(Status::NotConverged)
    }
}

pub fn fit(a: &FitArgs) -> Result<Status> {
    let mut m = Manifest::new("fit", &a.data.out)?;
    let data = load(&a.data, &mut m)?;
    m.set("lambda", a.lambda);
    m.set("alpha", a.alpha);
    let cfg = FitConfig {
        lambda: a.lambda,
        alpha: a.alpha,
        ..base_config(&a.data)
    };
    let solver = AdmmSolver::new(&data.x, &data.y, &data.tree, cfg.intercept)?;
    let res = solver.fit(&cfg, None)?;
    let status = write_fit(&mut m, &data, &res, &[])?;
    m.finish()?;
    Ok(status)
}

pub fn cv(a: &CvArgs) -> Result<Status> {
    let mut m = Manifest::new("cv", &a.data.out)?;
    m.seed(a.seed);
    let data = load(&a.data, &mut m)?;
    let base = base_config(&a.data);
    let solver = AdmmSolver::new(&data.x, &data.y, &data.tree, base.intercept)?;
    let grid: Vec<(f64, f64)> = match (&a.lambdas, &a.alphas) {
        (Some(ls), Some(al)) => al.iter().flat_map(|&al| ls.iter().map(move |&l| (l, al))).collect(),
        (None, None) => default_grid(solver.design(), a.n_alpha, a.n_lambda, a.lambda_ratio),
        _ => bail!("--lambdas and --alphas must be given together"),
    };
    let clip = match a.clip.as_deref() {
        None => None,
        Some([lo, hi]) if lo <= hi => Some((*lo, *hi)),
        Some(_) => bail!("--clip expects lo,hi with lo <= hi"),
    };
    m.set("folds", a.folds as u64);
    m.set("grid_size", grid.len() as u64);
    m.set("n_lambda", a.n_lambda as u64);
    m.set("n_alpha", a.n_alpha as u64);
    m.set("lambda_ratio", a.lambda_ratio);
    m.set("one_se", a.one_se);
    m.set("clip", clip.map_or(Value::Null, |(lo, hi)| json!([lo, hi])));

    let res = kfold_cv(&data.x, &data.y, &data.tree, &grid, a.folds, a.seed, clip, &base)?;
    let mut table = String::from("lambda,alpha,cv_mean,cv_se\n");
    for (i, &(l, al)) in res.grid.iter().enumerate() {
        writeln!(table, "{},{},{},{}", l, al, res.cv_mean[i], res.cv_se[i])?;
    }
    m.write("cv.csv", &table)?;
    let pick = if a.one_se { res.one_se_index() } else { res.best_index };
    let (lambda, alpha) = res.grid[pick];
    let refit = solver.fit(&FitConfig { lambda, alpha, ..base }, None)?;
    let extra = [
        ("selected_index", json!(pick)),
        ("cv_mean", json!(res.cv_mean[pick])),
        ("cv_se", json!(res.cv_se[pick])),
    ];
    let status = write_fit(&mut m, &data, &refit, &extra)?;
    m.finish()?;
    println!("selected lambda = {}, alpha = {}", lambda, alpha);
    Ok(status)
}

fn preset_spec(p: Preset, k: usize) -> ExperimentSpec {
    match p {
        Preset::LowDim => ExperimentSpec::low_dim(k),
        Preset::HighDim => ExperimentSpec::high_dim(k),
    }
}

fn preset_name(p: Preset) -> &'static str {
    match p {
        Preset::LowDim => "low-dim",
        Preset::HighDim => "high-dim",
    }
}

fn sweep_setup(s: &SweepArgs, k: usize, m: &mut Manifest) -> (ExperimentSpec, SweepOptions) {
    let mut spec = preset_spec(s.preset, k);
    spec.seed = s.seed;
    if let Some(r) = s.replicates {
        spec.replicates = r;
    }
    m.seed(s.seed);
    m.set("preset", preset_name(s.preset));
    m.set("n", spec.n as u64);
    m.set("p", spec.p as u64);
    m.set("s", spec.s);
    m.set("replicates", spec.replicates as u64);
    m.set("n_alpha", s.n_alpha as u64);
    m.set("n_lambda", s.n_lambda as u64);
    m.set("lambda_ratio", s.lambda_ratio);
    m.set("rho", s.rho.map_or(Value::Null, Value::from));
    m.set("max_iter", s.max_iter as u64);
    let opts = SweepOptions {
        n_alpha: s.n_alpha,
        n_lambda: s.n_lambda,
        lambda_ratio: s.lambda_ratio,
        rho: s.rho,
        max_iter: s.max_iter,
        ..SweepOptions::default()
    };
    (spec, opts)
}

fn table(rows: &[TableRow], setting: &str) -> Result<String> {
    let mut buf = Vec::new();
    experiments::write_table(rows, setting, &mut buf)?;
    Ok(String::from_utf8(buf)?)
}

pub fn simulate(c: &SimulateCommand) -> Result<Status> {
    match c {
        SimulateCommand::Scenario { sweep, k } => {
            let mut m = Manifest::new("simulate scenario", &sweep.out)?;
            let first = *k.first().context("--k needs at least one value")?;
            let (spec, opts) = sweep_setup(sweep, first, &mut m);
            m.set("k", k.iter().map(|&v| v as u64).collect::<Vec<_>>());
            let rows = experiments::run_scenario_sweep(&spec, k, &opts)?;
            let text = table(&rows, "k")?;
            m.write("scenario.csv", &text)?;
            m.finish()?;
            print!("{}", text);
        }
        SimulateCommand::Distortion { sweep, k, tau } => {
            let mut m = Manifest::new("simulate distortion", &sweep.out)?;
            let (spec, opts) = sweep_setup(sweep, *k, &mut m);
            m.set("k", *k as u64);
            m.set("tau", tau.clone());
            let rows = experiments::run_distortion_sweep(&spec, tau, &opts)?;
            let text = table(&rows, "tau")?;
            m.write("distortion.csv", &text)?;
            m.finish()?;
            print!("{}", text);
        }
    }
    Ok(Status::Ok)
}

pub fn verify(c: &VerifyCommand) -> Result<Status> {
    match c {
        VerifyCommand::Ols {
            n,
            k,
            eta,
            sigma,
            replicates,
            companions,
            seed,
            out,
        } => {
            let mut m = Manifest::new("verify ols", out)?;
            m.seed(*seed);
            m.set("n", n.iter().map(|&v| v as u64).collect::<Vec<_>>());
            m.set("k", *k as u64);
            m.set("eta", *eta);
            m.set("sigma", *sigma);
            m.set("replicates", *replicates as u64);
            m.set("companions", *companions as u64);
            let rows = experiments::verify_ols_failure(n, *k, *eta, *sigma, *replicates, *companions, *seed)?;
            let mut text = String::from("n,empirical,se,bound,exact,pass\n");
            for r in &rows {
                writeln!(text, "{},{},{},{},{},{}", r.n, r.empirical, r.se, r.bound, r.exact, r.pass)?;
            }
            m.write("ols.csv", &text)?;
            m.finish()?;
            print!("{}", text);
        }
        VerifyCommand::Recovery {
            n,
            k,
            sigma,
            signal,
            replicates,
            seed,
            out,
        } => {
            let mut m = Manifest::new("verify recovery", out)?;
            m.seed(*seed);
            let signal = signal.unwrap_or_else(|| experiments::recovery_window(*n, *k, *sigma).1);
            m.set("n", *n as u64);
            m.set("k", *k as u64);
            m.set("sigma", *sigma);
            m.set("signal", signal);
            m.set("replicates", *replicates as u64);
            let r = experiments::verify_support_recovery(*n, *k, signal, *sigma, *replicates, *seed)?;
            let text = flat_json(&[
                ("n", json!(r.n)),
                ("k", json!(r.k)),
                ("sigma", json!(r.sigma)),
                ("signal", json!(r.signal)),
                ("window_lo", json!(r.window.0)),
                ("window_hi", json!(r.window.1)),
                ("c_tilde", json!(r.c_tilde)),
                ("lambda", json!(r.lambda)),
                ("replicates", json!(r.replicates)),
                ("oracle_rate", json!(r.oracle_rate)),
                ("oracle_se", json!(r.oracle_se)),
                ("oracle_ci_lo", json!(r.oracle_ci.0)),
                ("oracle_ci_hi", json!(r.oracle_ci.1)),
                ("oracle_floor", json!(r.oracle_floor)),
                ("lasso_rate", json!(r.lasso_rate)),
                ("lasso_se", json!(r.lasso_se)),
                ("lasso_ci_lo", json!(r.lasso_ci.0)),
                ("lasso_ci_hi", json!(r.lasso_ci.1)),
                ("separation_rate", json!(r.separation_rate)),
                ("lasso_ceiling", json!(r.lasso_ceiling)),
            ]);
            m.write("recovery.json", &text)?;
            m.finish()?;
            print!("{}", text);
        }
        VerifyCommand::Bound {
            preset,
            k,
            replicates,
            seed,
            rho,
            out,
        } => {
            let mut m = Manifest::new("verify bound", out)?;
            m.seed(*seed);
            let spec = ExperimentSpec {
                seed: *seed,
                replicates: *replicates,
                ..preset_spec(*preset, *k)
            };
            m.set("preset", preset_name(*preset));
            m.set("k", *k as u64);
            m.set("replicates", *replicates as u64);
            m.set("rho", rho.map_or(Value::Null, Value::from));
            let rep = experiments::verify_prediction_bound(&spec, *rho)?;
            let mut text = String::from(
                "replicate,sigma,lambda,alpha,support_size,b_star_size,lhs,rhs_full,rhs_simple,violated,converged,iterations\n",
            );
            for (i, r) in rep.replicates.iter().enumerate() {
                writeln!(
                    text,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    i,
                    r.sigma,
                    r.lambda,
                    r.alpha,
                    r.support_size,
                    r.b_star_size,
                    r.lhs,
                    r.rhs_full,
                    r.rhs_simple,
                    r.violated(),
                    r.converged,
                    r.iterations
                )?;
            }
            m.write("bound.csv", &text)?;
            let summary = flat_json(&[
                ("violation_rate", json!(rep.violation_rate)),
                ("violation_se", json!(rep.violation_se)),
                ("allowed_rate", json!(rep.allowed_rate)),
                ("tree_size_ok", json!(rep.tree_size_ok)),
                ("column_norm_ok", json!(rep.column_norm_ok)),
                ("pass", json!(rep.pass)),
            ]);
            m.write("bound.json", &summary)?;
            m.finish()?;
            print!("{}", summary);
        }
    }
    Ok(Status::Ok)
}

pub fn tree(c: &TreeCommand) -> Result<Status> {
    match c {
        TreeCommand::Build { vectors, linkage, out } => {
            let mut m = Manifest::new("tree build", out)?;
            m.input(vectors);
            let pts = read_numeric_rows(vectors).context("--vectors")?;
            let (link, name) = match linkage {
                LinkageArg::Complete => (Linkage::Complete, "complete"),
                LinkageArg::Average => (Linkage::Average, "average"),
                LinkageArg::Single => (Linkage::Single, "single"),
                LinkageArg::Ward => (Linkage::Ward, "ward"),
            };
            m.set("linkage", name);
            let tree = build_tree_hclust(&pts, link)?;
            let mut buf = Vec::new();
            write_tree_csv(&tree, &mut buf)?;
            m.write("tree.csv", &String::from_utf8(buf)?)?;
            m.finish()?;
        }
        TreeCommand::Cut {
            tree,
            mode,
            threshold,
            x,
            out,
        } => {
            let mut m = Manifest::new("tree cut", out)?;
            let t = read_tree(tree)?;
            m.input(tree);
            let design = match x {
                Some(path) => {
                    m.input(path);
                    let d = read_design(path, None).context("--x")?;
                    Some(align_to_tree(d, &t)?)
                }
                None => None,
            };
            let (cm, name) = match mode {
                CutModeArg::Height => (CutMode::Height, "height"),
                CutModeArg::Density => (CutMode::Density, "density"),
            };
            m.set("mode", name);
            m.set("threshold", *threshold);
            let set = cut_tree(&t, cm, *threshold, design.as_ref())?;
            let mut text = String::from("feature_id,group,node_id\n");
            let groups = set.group_of_leaves(&t);
            for (j, g) in groups.iter().enumerate() {
                writeln!(text, "{},{},{}", t.label(j), g, t.label(set.nodes()[*g]))?;
            }
            m.write("groups.csv", &text)?;
            m.finish()?;
        }
    }
    Ok(Status::Ok)
}
