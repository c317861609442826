//! `hypercert`: simulate time-tag runs, analyze them into visibilities and
//! certify entanglement dimension from the visibilities.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver
//! infeasible or out of iterations.

mod config;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hypercert::certify::{full_report_with_certificates, BoundCertificate, CertReport, ReportOptions};
use hypercert::measure::{fit_visibility, FitOptions, ScanCurve};
use hypercert::pipeline::{accidental_fraction, analyze_run, simulate_run, ScanKind, VisibilityReport};
use hypercert::sdp::{self, BoundKind, BoundOptions, SdpProblemJson};
use hypercert::tagstream::{read_tags, write_tags, TagFormat, TimeTag};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use config::{Expected, FileEntry, Manifest, RunConfig, SCHEMA_VERSION};

#[derive(Debug)]
pub struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    pub fn config(msg: impl Into<String>) -> Self {
        Self {
            code: 2,
            msg: msg.into(),
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self {
            code: 3,
            msg: msg.into(),
        }
    }
}

impl From<hypercert::Error> for Failure {
    fn from(e: hypercert::Error) -> Self {
        use hypercert::Error as E;
        let code = match &e {
            E::Infeasible { .. } | E::MaxIter { .. } => 4,
            E::Io(_)
            | E::Json(_)
            | E::Csv(_)
            | E::Format(_)
            | E::EmptyStream(_)
            | E::PeakNotFound { .. }
            | E::Degenerate(_) => 3,
            _ => 2,
        };
        Self {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::data(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TagFormatArg {
    Csv,
    Bin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BoundArg {
    Concurrence,
    Fidelity,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or("expected two comma-separated numbers, e.g. 0.977,0.906")?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("'{x}': {e}"));
    Ok((p(a)?, p(b)?))
}

#[derive(Parser, Debug)]
#[command(
    name = "hypercert",
    version,
    about = "Hyperentanglement certification from two-photon visibilities"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
    /// JSON run configuration (schema_version 1).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Coincidence window, picoseconds (default 2000).
    #[arg(long, global = true)]
    window_ps: Option<u64>,
    /// Subspace concurrences fed to the SDPs instead of the visibility-derived ones.
    #[arg(long, global = true, value_parser = parse_pair)]
    sdp_inputs: Option<(f64, f64)>,
    /// SDP relative duality-gap tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Include primal and dual SDP certificates in the output.
    #[arg(long, global = true)]
    dump_certificate: bool,
    /// Named parameter set, e.g. `field-trial`.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output file instead of stdout.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write Alice/Bob tag files and a manifest.
    Simulate {
        #[arg(long, default_value = "run")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = TagFormatArg::Bin)]
        tag_format: TagFormatArg,
    },
    /// Turn a simulated (or recorded) run into visibilities.
    Analyze {
        #[arg(long)]
        manifest: PathBuf,
        /// Also write pol/et/flat scan CSVs here.
        #[arg(long)]
        scan_dir: Option<PathBuf>,
    },
    /// Certification report from visibilities.
    Certify {
        /// JSON with `v_phi`, `v_hv`, `v_et` (an `analyze` output works).
        #[arg(long)]
        visibilities: Option<PathBuf>,
        #[arg(long)]
        v_phi: Option<f64>,
        #[arg(long)]
        v_hv: Option<f64>,
        #[arg(long)]
        v_et: Option<f64>,
        /// Subspace constraints as lower bounds instead of equalities.
        #[arg(long)]
        inequality: bool,
    },
    /// Solve one SDP: a JSON problem, or a named bound at `--sdp-inputs`.
    Solve {
        #[arg(long, conflicts_with = "bound")]
        problem: Option<PathBuf>,
        #[arg(long, value_enum)]
        bound: Option<BoundArg>,
    },
    /// Scan CSV plus the fitted curve, ready to plot.
    PlotData {
        #[arg(long)]
        scan: PathBuf,
        #[arg(long)]
        with_offset: bool,
    },
    /// Analyze and certify in one go.
    Report {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, bytes).map_err(|e| Failure::data(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut s = io::stdout().lock();
            s.write_all(bytes)?;
            s.flush()?;
            Ok(())
        }
    }
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>, Failure> {
    let mut b = serde_json::to_vec_pretty(v).map_err(|e| Failure::data(e.to_string()))?;
    b.push(b'\n');
    Ok(b)
}

fn csv_bytes(rows: &[(String, String)]) -> Vec<u8> {
    let mut s = String::from("key,value\n");
    for (k, v) in rows {
        s.push_str(&format!("{k},{v}\n"));
    }
    s.into_bytes()
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn cmd_simulate(cli: &Cli, cfg: &RunConfig, out_dir: &Path, tf: TagFormatArg) -> Result<(), Failure> {
    let sim = cfg.simulation(cli.preset.as_deref(), cli.seed, cli.window_ps)?;
    let window = cfg.window_ps(cli.window_ps);
    let (a, b) = simulate_run(&sim)?;
    fs::create_dir_all(out_dir).map_err(|e| Failure::data(format!("cannot create {}: {e}", out_dir.display())))?;
    let (format, ext) = match tf {
        TagFormatArg::Csv => (TagFormat::Csv, "csv"),
        TagFormatArg::Bin => (TagFormat::Binary, "bin"),
    };
    let write = |name: &str, tags: &[TimeTag]| -> Result<FileEntry, Failure> {
        let mut buf = Vec::new();
        write_tags(tags, format, &mut buf)?;
        let path = format!("{name}.{ext}");
        fs::write(out_dir.join(&path), &buf)?;
        Ok(FileEntry {
            path,
            sha256: sha256_hex(&buf),
            records: tags.len(),
        })
    };
    let alice = write("alice", &a)?;
    let bob = write("bob", &b)?;
    let link = &sim.link;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        seed: link.seed,
        expected: Expected {
            coincidence_rate: link.expected_coincidence_rate(),
            accidental_rate: link.expected_accidental_rate(window),
            source_car: link.source_car(),
            window_ps: window,
        },
        simulation: sim,
        tag_format: format,
        alice,
        bob,
    };
    log::info!(
        "accidental fraction {:.5} at {window} ps",
        accidental_fraction(&manifest.simulation.link, window)
    );
    let bytes = json_bytes(&manifest)?;
    fs::write(out_dir.join("manifest.json"), &bytes)?;
    emit(cli.out.as_deref(), &bytes)
}

fn load_run(manifest_path: &Path) -> Result<(Manifest, Vec<TimeTag>, Vec<TimeTag>), Failure> {
    let m = Manifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let load = |f: &FileEntry| -> Result<Vec<TimeTag>, Failure> {
        let p = dir.join(&f.path);
        let bytes = fs::read(&p).map_err(|e| Failure::data(format!("cannot read {}: {e}", p.display())))?;
        if sha256_hex(&bytes) != f.sha256 {
            return Err(Failure::data(format!(
                "{} does not match its manifest hash",
                p.display()
            )));
        }
        let tags = read_tags(bytes.as_slice())?;
        if tags.len() != f.records {
            return Err(Failure::data(format!(
                "{}: {} records, manifest says {}",
                p.display(),
                tags.len(),
                f.records
            )));
        }
        Ok(tags)
    };
    let a = load(&m.alice)?;
    let b = load(&m.bob)?;
    Ok((m, a, b))
}

fn analyze(cli: &Cli, cfg: &RunConfig, manifest: &Path) -> Result<VisibilityReport, Failure> {
    let (m, a, b) = load_run(manifest)?;
    Ok(analyze_run(
        &a,
        &b,
        &m.simulation.schedule,
        &cfg.analyze_options(cli.window_ps),
    )?)
}

fn settings_csv(r: &VisibilityReport) -> Vec<u8> {
    let mut s = String::from("kind,phi,start_s,duration_s,n00,n01,n10,n11,e,sigma\n");
    for x in &r.settings {
        let kind = serde_json::to_value(x.kind)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        let c = &x.counts;
        s.push_str(&format!(
            "{kind},{},{},{},{},{},{},{},{},{}\n",
            x.phi, x.start_s, x.duration_s, c.n00, c.n01, c.n10, c.n11, x.e, x.sigma
        ));
    }
    s.into_bytes()
}

fn cmd_analyze(cli: &Cli, cfg: &RunConfig, manifest: &Path, scan_dir: Option<&Path>) -> Result<(), Failure> {
    let r = analyze(cli, cfg, manifest)?;
    if let Some(dir) = scan_dir {
        fs::create_dir_all(dir)?;
        for (kind, name) in [
            (ScanKind::Pol, "pol"),
            (ScanKind::Et, "et"),
            (ScanKind::AliceOnly, "flat"),
        ] {
            let curve = r.scan(kind);
            if !curve.points.is_empty() {
                let mut buf = Vec::new();
                curve.write_csv(&mut buf)?;
                fs::write(dir.join(format!("{name}_scan.csv")), buf)?;
            }
        }
    }
    let bytes = match cli.format {
        Format::Json => json_bytes(&r)?,
        Format::Csv => settings_csv(&r),
    };
    emit(cli.out.as_deref(), &bytes)
}

/// Only the three visibilities are read; other keys are ignored.
#[derive(Deserialize)]
struct Visibilities {
    v_phi: f64,
    v_hv: f64,
    v_et: f64,
}

#[derive(Serialize)]
struct CertifiedBound {
    problem: SdpProblemJson,
    solution: sdp::SdpSolutionJson,
}

#[derive(Serialize)]
struct CertifyOutput<'a> {
    report: &'a CertReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificates: Option<[CertifiedBound; 2]>,
}

fn report_options(cli: &Cli, cfg: &RunConfig, inequality: bool) -> Result<ReportOptions, Failure> {
    let c = cfg.certify.clone().unwrap_or_default();
    let tol = cli.tol.or(c.tol).unwrap_or(sdp::DEFAULT_TOL);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Failure::config(format!("--tol must lie in (0, 1), got {tol}")));
    }
    Ok(ReportOptions {
        sdp_inputs: cli.sdp_inputs.or(c.sdp_inputs),
        bound: BoundOptions {
            tol,
            inequality: inequality || c.inequality.unwrap_or(false),
            ..Default::default()
        },
        concurrent: true,
    })
}

fn certify(
    v: &Visibilities,
    opts: &ReportOptions,
    dump: bool,
) -> Result<(CertReport, Option<[CertifiedBound; 2]>), Failure> {
    let (report, certs) = full_report_with_certificates(v.v_phi, v.v_hv, v.v_et, opts)?;
    let certs = dump.then(|| {
        certs.map(|BoundCertificate { problem, solution }| CertifiedBound {
            problem: problem.to_json(),
            solution: solution.to_json(),
        })
    });
    Ok((report, certs))
}

fn report_csv(r: &CertReport) -> Vec<u8> {
    let mut rows: Vec<(String, String)> = [
        ("c_lin_pol", r.c_lin_pol),
        ("c_lin_et", r.c_lin_et),
        ("eof_pol", r.eof_pol),
        ("eof_et", r.eof_et),
        ("c_lb", r.c_lb),
        ("f_lb", r.f_lb),
        ("eof_global", r.eof_global),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    rows.push(("certified_dim_eof".into(), r.certified_dim_eof.to_string()));
    rows.push(("certified_dim_fid".into(), r.certified_dim_fid.to_string()));
    rows.push(("entanglement_certified".into(), r.entanglement_certified.to_string()));
    rows.push(("vacuous".into(), r.vacuous.join(";")));
    csv_bytes(&rows)
}

fn cmd_certify(
    cli: &Cli,
    cfg: &RunConfig,
    src: Option<&Path>,
    flags: [Option<f64>; 3],
    inequality: bool,
) -> Result<(), Failure> {
    let v = match (src, flags) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::data(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str::<Visibilities>(&text)
                .map_err(|e| Failure::data(format!("invalid visibilities {}: {e}", p.display())))?
        }
        (None, [Some(v_phi), Some(v_hv), Some(v_et)]) => Visibilities { v_phi, v_hv, v_et },
        _ => {
            return Err(Failure::config(
                "give --visibilities <file> or all of --v-phi, --v-hv, --v-et",
            ))
        }
    };
    let opts = report_options(cli, cfg, inequality)?;
    let (report, certificates) = certify(&v, &opts, cli.dump_certificate)?;
    let bytes = match cli.format {
        Format::Json => json_bytes(&CertifyOutput {
            report: &report,
            certificates,
        })?,
        Format::Csv => report_csv(&report),
    };
    emit(cli.out.as_deref(), &bytes)
}

#[derive(Serialize)]
struct SolveOutput {
    status: sdp::SdpStatus,
    primal_value: f64,
    dual_value: f64,
    duality_gap: f64,
    primal_residual: f64,
    iterations: usize,
    certificate_verified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    problem: Option<SdpProblemJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solution: Option<sdp::SdpSolutionJson>,
}

fn cmd_solve(cli: &Cli, cfg: &RunConfig, problem: Option<&Path>, bound: Option<BoundArg>) -> Result<(), Failure> {
    let opts = report_options(cli, cfg, false)?;
    let p = match (problem, bound) {
        (Some(path), _) => {
            let text =
                fs::read_to_string(path).map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))?;
            let j: SdpProblemJson = serde_json::from_str(&text)
                .map_err(|e| Failure::data(format!("invalid problem {}: {e}", path.display())))?;
            sdp::SdpProblem::<f64>::from_json(&j)?
        }
        (None, Some(kind)) => {
            let (a, b) = opts
                .sdp_inputs
                .ok_or_else(|| Failure::config("--bound needs --sdp-inputs a,b"))?;
            let kind = match kind {
                BoundArg::Concurrence => BoundKind::Concurrence,
                BoundArg::Fidelity => BoundKind::Fidelity,
            };
            sdp::subspace_problem(kind, a, b, 2, 2, &opts.bound)?
        }
        (None, None) => return Err(Failure::config("give --problem <file> or --bound concurrence|fidelity")),
    };
    let s = sdp::solve(&p, opts.bound.tol)?;
    let out = SolveOutput {
        status: s.status,
        primal_value: s.primal_value,
        dual_value: s.dual_value,
        duality_gap: s.duality_gap,
        primal_residual: s.primal_residual,
        iterations: s.iterations,
        certificate_verified: sdp::verify_certificate(&p, &s),
        problem: cli.dump_certificate.then(|| p.to_json()),
        solution: cli.dump_certificate.then(|| s.to_json()),
    };
    let bytes = match cli.format {
        Format::Json => json_bytes(&out)?,
        Format::Csv => csv_bytes(&[
            ("status".into(), format!("{:?}", out.status).to_lowercase()),
            ("primal_value".into(), out.primal_value.to_string()),
            ("dual_value".into(), out.dual_value.to_string()),
            ("duality_gap".into(), out.duality_gap.to_string()),
            ("certificate_verified".into(), out.certificate_verified.to_string()),
        ]),
    };
    emit(cli.out.as_deref(), &bytes)?;
    match s.status {
        sdp::SdpStatus::Optimal => Ok(()),
        other => Err(Failure {
            code: 4,
            msg: format!(
                "solver finished {other:?} after {} iterations (primal residual {:.3e}, phase-I violation {:?})",
                s.iterations, s.primal_residual, s.phase1_violation
            ),
        }),
    }
}

fn cmd_plot_data(cli: &Cli, scan: &Path, with_offset: bool) -> Result<(), Failure> {
    let f = fs::File::open(scan).map_err(|e| Failure::data(format!("cannot read {}: {e}", scan.display())))?;
    let curve = ScanCurve::read_csv(f)?;
    let fit = fit_visibility(&curve, FitOptions { with_offset })?;
    let bytes = match cli.format {
        Format::Csv => {
            let mut s = String::from("phi_rad,E,sigma,fit\n");
            for p in &curve.points {
                s.push_str(&format!("{},{},{},{}\n", p.phi, p.e, p.sigma, fit.model(p.phi)));
            }
            s.into_bytes()
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Row {
                phi: f64,
                e: f64,
                sigma: f64,
                fit: f64,
            }
            #[derive(Serialize)]
            struct PlotOut {
                fit: hypercert::measure::VisibilityFit,
                points: Vec<Row>,
            }
            json_bytes(&PlotOut {
                fit,
                points: curve
                    .points
                    .iter()
                    .map(|p| Row {
                        phi: p.phi,
                        e: p.e,
                        sigma: p.sigma,
                        fit: fit.model(p.phi),
                    })
                    .collect(),
            })?
        }
    };
    emit(cli.out.as_deref(), &bytes)
}

#[derive(Serialize)]
struct FullReport<'a> {
    visibilities: &'a VisibilityReport,
    certification: CertifyOutput<'a>,
}

fn cmd_report(cli: &Cli, cfg: &RunConfig, manifest: &Path) -> Result<(), Failure> {
    let vis = analyze(cli, cfg, manifest)?;
    let opts = report_options(cli, cfg, false)?;
    let v = Visibilities {
        v_phi: vis.v_phi.min(1.0),
        v_hv: vis.v_hv.min(1.0),
        v_et: vis.v_et.min(1.0),
    };
    let (report, certificates) = certify(&v, &opts, cli.dump_certificate)?;
    let bytes = match cli.format {
        Format::Json => json_bytes(&FullReport {
            visibilities: &vis,
            certification: CertifyOutput {
                report: &report,
                certificates,
            },
        })?,
        Format::Csv => {
            let mut b = csv_bytes(&[
                ("v_hv".into(), vis.v_hv.to_string()),
                ("v_phi".into(), vis.v_phi.to_string()),
                ("v_et".into(), vis.v_et.to_string()),
            ]);
            b.extend(report_csv(&report).into_iter().skip("key,value\n".len()));
            b
        }
    };
    emit(cli.out.as_deref(), &bytes)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match &cli.cmd {
        Command::Simulate { out_dir, tag_format } => cmd_simulate(cli, &cfg, out_dir, *tag_format),
        Command::Analyze { manifest, scan_dir } => cmd_analyze(cli, &cfg, manifest, scan_dir.as_deref()),
        Command::Certify {
            visibilities,
            v_phi,
            v_hv,
            v_et,
            inequality,
        } => cmd_certify(cli, &cfg, visibilities.as_deref(), [*v_phi, *v_hv, *v_et], *inequality),
        Command::Solve { problem, bound } => cmd_solve(cli, &cfg, problem.as_deref(), *bound),
        Command::PlotData { scan, with_offset } => cmd_plot_data(cli, scan, *with_offset),
        Command::Report { manifest } => cmd_report(cli, &cfg, manifest),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
