use msgcomp::coding::partition::required_multiple;
use msgcomp::coding::testset::{content_key, TestSetFile};
use msgcomp::coding::{verify_test_set, ExtendOptions, ExtendedSource, TestSetA, TestSetParams};
use msgcomp::experiments::{
    build_counterexample, build_hard_instance, evaluate_oneway, hand_built_protocols, interactive_corner_scheme,
    reduce_randomness, reduction_extract, solve_alpha, verify_counterexample, BankedTaskB, OneWayProtocol,
    ReduceOptions, Verbatim,
};
use msgcomp::info::{canonical, minimal_symmetric_rate, region_cmi, region_compare, region_oneshot, M, N};
use msgcomp::lemmas::{run_case, run_suite, CaseOutcome, SUITES};
use msgcomp::numeric::{format_rational, parse_rational, to_f64};
use msgcomp::protocol::{
    dsc_instance, dsc_mismatch, estimate_error, lossy_achieve, specialize_dsc, specialize_task_b,
    task_b_minimal_rate, write_transcript, LossyTaskFile, ProtocolConfig,
};
use msgcomp::{Error, JointDist, Prob};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

use crate::error::CliError;
use crate::manifest::{sha256_hex, FileHash, RunManifest};
use crate::{Cli, Command, Format, Global, RegionKindArg, TaskArg, TestsetAction};

// grid searched when a rate is not given
const RATE_STEP: f64 = 0.5;
const RATE_MAX: f64 = 20.0;

/// Per-run state: global flags plus the files read and written.
pub struct Context {
    pub global: Global,
    /// Side outputs are hashed but not written.
    pub dry: bool,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

impl Context {
    pub fn new(global: Global, dry: bool) -> Self {
        Context {
            global,
            dry,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn read(&mut self, path: &Path) -> Result<String, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.inputs.push(FileHash {
            path: path.to_path_buf(),
            sha256: sha256_hex(text.as_bytes()),
        });
        Ok(text)
    }

    fn dist(&mut self, path: &Path) -> Result<JointDist, CliError> {
        let text = self.read(path)?;
        Ok(JointDist::from_json(&text, self.global.normalize)?)
    }

    fn write_side(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        if !self.dry {
            std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
        }
        self.outputs.push(FileHash {
            path: path.to_path_buf(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn json_only(&self, command: &str) -> Result<(), CliError> {
        if self.global.format == Format::Csv {
            return Err(CliError::Usage(format!("`{command}` has no CSV output")));
        }
        Ok(())
    }
}

pub enum Body {
    Json(Value),
    Text(String),
}

/// Result of a command. `ok == false` maps to exit code 1.
pub struct Outcome {
    pub body: Body,
    pub ok: bool,
    pub summary: String,
}

impl Outcome {
    fn json(v: Value) -> Self {
        Outcome {
            body: Body::Json(v),
            ok: true,
            summary: String::new(),
        }
    }

    pub fn render(&self) -> Vec<u8> {
        match &self.body {
            Body::Json(v) => (serde_json::to_string_pretty(v).expect("serializable") + "\n").into_bytes(),
            Body::Text(s) => s.clone().into_bytes(),
        }
    }
}

fn prob(s: &str) -> Result<Prob, CliError> {
    Ok(parse_rational(s)?)
}

fn rate(s: &str) -> Result<f64, CliError> {
    Ok(to_f64(&parse_rational(s)?))
}

fn value<T: serde::Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("serializable")
}

fn no_rate() -> CliError {
    Error::Budget(format!("no grid rate up to {RATE_MAX} reaches the target mass")).into()
}

pub fn dispatch(cmd: &Command, ctx: &mut Context) -> Result<Outcome, CliError> {
    let seed = ctx.global.seed;
    match cmd {
        Command::Region {
            dist,
            kind,
            r1,
            r2,
            delta,
            eps,
            s,
            t,
            eps1,
            eps2,
            eps3,
        } => {
            ctx.json_only("region")?;
            let d = ctx.dist(dist)?;
            let (r1, r2, delta) = (rate(r1)?, rate(r2)?, prob(delta)?);
            let report = match kind {
                RegionKindArg::Oneshot => region_oneshot(&d, r1, r2, &delta, &prob(eps)?)?,
                RegionKindArg::Cmi => region_cmi(&d, r1, r2, &delta)?,
                RegionKindArg::Comparison => {
                    let (Some(s), Some(t)) = (s, t) else {
                        return Err(CliError::Usage("the comparison region needs --s and --t".into()));
                    };
                    let (s, t) = (ctx.dist(s)?, ctx.dist(t)?);
                    region_compare(&d, &s, &t, &prob(eps1)?, &prob(eps2)?, &prob(eps3)?, &delta, r1, r2)?
                }
            };
            Ok(Outcome::json(value(&report)))
        }
        Command::Simulate {
            dist,
            task,
            r1,
            r2,
            eps,
            delta,
            trials,
            transcript,
            csv,
        } => {
            let d = ctx.dist(dist)?;
            let (delta, eps) = (prob(delta)?, prob(eps)?);
            let given = |r: &Option<String>| r.as_deref().map(rate).transpose();
            let (cfg, report, joint_csv): (ProtocolConfig, Value, String) = match task {
                TaskArg::Full | TaskArg::Dsc => {
                    let inst = if *task == TaskArg::Dsc { dsc_instance(&d)? } else { d.clone() };
                    let auto = match (r1, r2) {
                        (Some(_), Some(_)) => None,
                        _ => Some(minimal_symmetric_rate(&inst, &delta, &eps, RATE_STEP, RATE_MAX)?.ok_or_else(no_rate)?),
                    };
                    let r1 = given(r1)?.or(auto).expect("rate chosen");
                    let r2 = given(r2)?.or(auto).expect("rate chosen");
                    eprintln!("msgcomp: simulating {trials} trials at R1 = {r1}, R2 = {r2}");
                    if *task == TaskArg::Dsc {
                        let cfg = specialize_dsc(&d, r1, r2, &delta, seed)?;
                        let rep = dsc_mismatch(&cfg, *trials, seed);
                        let csv = rep.estimate.joint.to_csv();
                        (cfg, value(&rep), csv)
                    } else {
                        let cfg = ProtocolConfig::from_dist(&d, r1, r2, &delta, seed, &ExtendOptions::default())?;
                        let est = estimate_error(&cfg, *trials, seed);
                        let csv = est.joint.to_csv();
                        (cfg, value(&est), csv)
                    }
                }
                TaskArg::Taskb => {
                    let r = match given(r1)? {
                        Some(r) => r,
                        None => task_b_minimal_rate(&d, &delta, &eps, RATE_STEP, RATE_MAX)?.ok_or_else(no_rate)?,
                    };
                    eprintln!("msgcomp: simulating {trials} trials at R = {r}");
                    let cfg = specialize_task_b(&d, r, &delta, seed)?;
                    let est = estimate_error(&cfg, *trials, seed);
                    let csv = est.joint.to_csv();
                    (cfg, value(&est), csv)
                }
            };
            if let Some(path) = transcript {
                let mut buf = Vec::new();
                write_transcript(&cfg, *trials, &mut buf).map_err(|e| CliError::io(path, e))?;
                ctx.write_side(path, &buf)?;
            }
            if let Some(path) = csv {
                ctx.write_side(path, joint_csv.as_bytes())?;
            }
            let body = match ctx.global.format {
                Format::Csv => Body::Text(joint_csv),
                Format::Json => Body::Json(json!({ "task": task_name(*task), "report": report })),
            };
            Ok(Outcome {
                body,
                ok: true,
                summary: String::new(),
            })
        }
        Command::Testset { action } => {
            ctx.json_only("testset")?;
            testset(action, ctx)
        }
        Command::Lemmas { suite, count, dump } => lemmas(suite.as_deref(), *count, dump.as_deref(), ctx),
        Command::Replay {
            manifest,
            case,
            suite,
            index,
        } => {
            ctx.json_only("replay")?;
            if let Some(m) = manifest {
                replay_manifest(m, ctx)
            } else if let Some(c) = case {
                let text = ctx.read(c)?;
                let recorded: CaseOutcome = serde_json::from_str(&text)?;
                let again = run_case(&recorded.suite, recorded.seed, recorded.index)?;
                let reproduced = value(&again) == value(&recorded);
                Ok(Outcome {
                    body: Body::Json(json!({
                        "suite": again.suite,
                        "seed": again.seed,
                        "index": again.index,
                        "holds": again.holds,
                        "reproduced": reproduced,
                        "outcome": again,
                    })),
                    ok: reproduced,
                    summary: "the case did not reproduce".into(),
                })
            } else if let (Some(s), Some(i)) = (suite, index) {
                Ok(Outcome::json(value(&run_case(s, seed, *i)?)))
            } else {
                Err(CliError::Usage("give --manifest, --case, or --suite with --index".into()))
            }
        }
        Command::Hardsw { n, eps } => {
            ctx.json_only("hardsw")?;
            let h = build_hard_instance(*n, &prob(eps)?)?;
            let mut protocols: Vec<Box<dyn OneWayProtocol>> = vec![Box::new(Verbatim { x_card: h.x_card })];
            protocols.extend(hand_built_protocols(&h));
            let mut rows = Vec::new();
            for p in &protocols {
                let ev = evaluate_oneway(p.as_ref(), &h)?;
                let ex = reduction_extract(p.as_ref(), &h)?;
                rows.push(json!({ "evaluation": ev, "extraction": ex }));
            }
            Ok(Outcome::json(json!({
                "n": h.n,
                "eps": format_rational(&h.eps),
                "delta": format_rational(&h.delta),
                "mixing": h.mixing,
                "x_card": h.x_card,
                "h_x_given_z": h.h_x_given_z()?,
                "h_x_given_z_closed_form": h.h_x_given_z_closed_form(),
                "cost_lower_bound": h.cost_lower_bound(),
                "protocols": rows,
            })))
        }
        Command::Counterexample { eps, size, alpha } => {
            ctx.json_only("counterexample")?;
            let eps = rate(eps)?;
            let (alpha, branch) = match alpha {
                Some(a) => (*a, None),
                None => {
                    let (a, b) = solve_alpha(eps)?;
                    (a, Some(b))
                }
            };
            let report = verify_counterexample(&build_counterexample(alpha, *size)?, eps);
            Ok(Outcome::json(json!({ "alpha_branch": branch, "report": report })))
        }
        Command::ReduceRand {
            dist,
            rate: r,
            eps,
            delta,
            reduce_delta,
            budget,
            list_size,
        } => {
            ctx.json_only("reduce-rand")?;
            let d = ctx.dist(dist)?;
            let delta = prob(delta)?;
            let r = match r {
                Some(r) => rate(r)?,
                None => task_b_minimal_rate(&d, &delta, &prob(eps)?, RATE_STEP, RATE_MAX)?.ok_or_else(no_rate)?,
            };
            let cfg = specialize_task_b(&d, r, &delta, seed)?;
            let mut opts = ReduceOptions::new(prob(reduce_delta)?, *budget, seed);
            opts.list_size = *list_size;
            let report = reduce_randomness(&cfg, &opts)?;
            Ok(Outcome::json(json!({
                "rate": r,
                "delta": format_rational(&delta),
                "reduce_delta": format_rational(&opts.delta),
                "report": report,
            })))
        }
        Command::Lossy {
            task,
            r1,
            r2,
            delta,
            delta_prime,
            trials,
        } => {
            ctx.json_only("lossy")?;
            let text = ctx.read(task)?;
            let file: LossyTaskFile = serde_json::from_str(&text)?;
            let t = file.into_task(ctx.global.normalize)?;
            let report = lossy_achieve(&t, rate(r1)?, rate(r2)?, &prob(delta)?, &prob(delta_prime)?, *trials, seed)?;
            Ok(Outcome::json(value(&report)))
        }
        Command::Interactive {
            dist,
            p,
            delta,
            eps,
            step,
            max_rate,
        } => {
            ctx.json_only("interactive")?;
            let d = ctx.dist(dist)?;
            let runner = BankedTaskB {
                delta: prob(delta)?,
                epsilon: prob(eps)?,
                step: *step,
                max_rate: *max_rate,
            };
            let cost = interactive_corner_scheme(&d, &prob(p)?, &runner)?;
            Ok(Outcome::json(value(&cost)))
        }
    }
}

fn task_name(t: TaskArg) -> &'static str {
    match t {
        TaskArg::Full => "full",
        TaskArg::Dsc => "dsc",
        TaskArg::Taskb => "taskb",
    }
}

fn source_for(d: &JointDist, delta: &Prob) -> Result<ExtendedSource, CliError> {
    let d = canonical(d)?;
    let max_card = d.size_of(M)?.max(d.size_of(N)?);
    let opts = ExtendOptions {
        k_multiple: required_multiple(delta, max_card)?,
        ..ExtendOptions::default()
    };
    Ok(ExtendedSource::build(&d, &opts)?)
}

fn testset(action: &TestsetAction, ctx: &mut Context) -> Result<Outcome, CliError> {
    match action {
        TestsetAction::Build { dist, r1, r2, delta } => {
            let d = ctx.dist(dist)?;
            let delta = prob(delta)?;
            let src = source_for(&d, &delta)?;
            let params = TestSetParams::new(rate(r1)?, rate(r2)?, delta);
            let a = TestSetA::build(&src, &params)?;
            eprintln!("msgcomp: built acceptance set with K = {}", a.k);
            Ok(Outcome::json(value(&a.to_file(content_key(&src.base, &params)))))
        }
        TestsetAction::Verify { dist, testset } => {
            let d = ctx.dist(dist)?;
            let text = ctx.read(testset)?;
            let file: TestSetFile = serde_json::from_str(&text)?;
            let delta = prob(&file.delta)?;
            let src = source_for(&d, &delta)?;
            let mut params = TestSetParams::new(file.r1, file.r2, delta);
            params.power = file.power;
            if content_key(&src.base, &params) != file.key {
                return Err(Error::SchemaMismatch("the acceptance set was built for a different instance".into()).into());
            }
            let a = TestSetA::from_file(&file)?;
            if a.k != src.k {
                return Err(Error::SchemaMismatch(format!("set has K = {} but the source has K = {}", a.k, src.k)).into());
            }
            let report = verify_test_set(&a, &src)?;
            let ok = report.all_hold();
            Ok(Outcome {
                body: Body::Json(json!({ "key": file.key, "k": a.k, "all_hold": ok, "report": report })),
                ok,
                summary: "at least one bound of the acceptance set fails".into(),
            })
        }
    }
}

fn lemmas(suite: Option<&str>, count: u64, dump: Option<&Path>, ctx: &mut Context) -> Result<Outcome, CliError> {
    let seed = ctx.global.seed;
    let suites: Vec<&str> = match suite {
        Some(s) => vec![s],
        None => SUITES.to_vec(),
    };
    let mut reports = Vec::new();
    for s in suites {
        let r = run_suite(s, seed, count)?;
        eprintln!("msgcomp: {s}: {}/{} pass", r.passed, r.count);
        if let Some(dir) = dump {
            if !r.failures.is_empty() && !ctx.dry {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            for f in &r.failures {
                let path: PathBuf = dir.join(format!("{}-{}-{}.json", f.suite, f.seed, f.index));
                let text = serde_json::to_string_pretty(f)? + "\n";
                ctx.write_side(&path, text.as_bytes())?;
            }
        }
        reports.push(r);
    }
    let failed: u64 = reports.iter().map(|r| r.failed).sum();
    let body = match ctx.global.format {
        Format::Csv => {
            let mut s = String::from("suite,seed,count,passed,failed\n");
            for r in &reports {
                s.push_str(&format!("{},{},{},{},{}\n", r.suite, r.seed, r.count, r.passed, r.failed));
            }
            Body::Text(s)
        }
        Format::Json => Body::Json(json!({
            "seed": seed,
            "count": count,
            "all_pass": failed == 0,
            "suites": reports,
        })),
    };
    Ok(Outcome {
        body,
        ok: failed == 0,
        summary: format!("{failed} failing case(s)"),
    })
}

fn replay_manifest(path: &Path, ctx: &mut Context) -> Result<Outcome, CliError> {
    let text = ctx.read(path)?;
    let m: RunManifest = serde_json::from_str(&text)?;
    let cli = <Cli as clap::Parser>::try_parse_from(std::iter::once("msgcomp".to_string()).chain(m.arguments.iter().cloned()))
        .map_err(|e| CliError::Usage(format!("manifest arguments do not parse: {e}")))?;
    let mut inner = Context::new(cli.global.clone(), true);
    let result = dispatch(&cli.command, &mut inner)?;
    let rendered = result.render();
    let mut replayed = vec![FileHash {
        path: m.outputs.first().map(|o| o.path.clone()).unwrap_or_default(),
        sha256: sha256_hex(&rendered),
    }];
    replayed.extend(inner.outputs);
    let inputs_match = inner.inputs == m.inputs;
    let outputs: Vec<Value> = m
        .outputs
        .iter()
        .zip(replayed.iter().map(Some).chain(std::iter::repeat(None)))
        .map(|(rec, again)| {
            json!({
                "path": rec.path,
                "recorded": rec.sha256,
                "replayed": again.map(|a| a.sha256.clone()),
                "matches": again.is_some_and(|a| a.sha256 == rec.sha256),
            })
        })
        .collect();
    let reproduced = inputs_match
        && replayed.len() == m.outputs.len()
        && outputs.iter().all(|o| o["matches"] == true);
    Ok(Outcome {
        body: Body::Json(json!({
            "command": m.command,
            "inputs_match": inputs_match,
            "reproduced": reproduced,
            "outputs": outputs,
        })),
        ok: reproduced,
        summary: "the replayed run differs from the manifest".into(),
    })
}
