//! Reproducible experiment front end: generation, matching, displacement
//! tails, identity verification, and event-bound tables.
//!
//! Exit codes: 0 success, 1 verification failure, 2 invalid arguments,
//! 3 undecidable within the generated region (enlarge --margin / --kmax).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use eqmatch::clumping::{cutter_radius, k_max_for_residual, torus_max_level};
use eqmatch::error::Error;
use eqmatch::events::{
    detect_cutter_hits_field, detect_enclosed_field, reference_bound, BoundKind, TailExponents,
};
use eqmatch::io::{
    configuration_sidecar, truncation_json, write_configuration, write_cutlevels_csv,
    write_seeds_csv, write_tail_svg,
};
use eqmatch::lattice::{derive_seed, BitField, Configuration, Geometry};
use eqmatch::meshalkin::meshalkin_lift;
use eqmatch::pipeline::{build_torus, build_window, WindowParams, DEFAULT_RESIDUAL_TARGET};
use eqmatch::stats::{estimate_tail, fit_exponent, parse_radii, RuleKind, TailParams};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "eqmatch", version, about = "Translation-equivariant lattice matching experiments")]
struct Cli {
    /// Optional key=value config file; flags on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a configuration and write it with its JSON sidecar.
    Gen(GenArgs),
    /// Build a matching and write the pair CSV plus a summary report.
    Match(MatchArgs),
    /// Estimate the displacement tail and fit its log-log slope.
    Tail(TailArgs),
    /// Run the identity and property suites; nonzero exit on any failure.
    Verify(VerifyArgs),
    /// Tabulate enclosure/cutter-hit frequencies against their bounds.
    Events(EventsArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum GeometryKind {
    Window,
    Torus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum RuleArg {
    Meshalkin,
    Clump,
}

impl From<RuleArg> for RuleKind {
    fn from(r: RuleArg) -> RuleKind {
        match r {
            RuleArg::Meshalkin => RuleKind::Meshalkin,
            RuleArg::Clump => RuleKind::Clump,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct RegionArgs {
    /// Lattice dimension d.
    #[arg(long, default_value_t = 2)]
    dim: u32,
    /// Side length, one value for all axes or comma-separated per axis.
    #[arg(long, default_value = "64")]
    side: String,
    #[arg(long, value_enum, default_value_t = GeometryKind::Torus)]
    geometry: GeometryKind,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    bias: f64,
}

impl RegionArgs {
    fn sides(&self) -> Result<Vec<u64>, Error> {
        let parts: Vec<&str> = self.side.split(',').collect();
        let mut sides = Vec::new();
        for p in &parts {
            sides.push(
                p.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::invalid(format!("bad side {p}")))?,
            );
        }
        if sides.len() == 1 && self.dim > 1 {
            sides = vec![sides[0]; self.dim as usize];
        }
        if sides.len() != self.dim as usize {
            return Err(Error::invalid(format!(
                "{} side values for dimension {}",
                sides.len(),
                self.dim
            )));
        }
        Ok(sides)
    }

    fn geometry(&self) -> Result<Geometry, Error> {
        let sides = self.sides()?;
        match self.geometry {
            GeometryKind::Window => Geometry::centered_window(sides),
            GeometryKind::Torus => Geometry::torus(sides),
        }
    }

    fn spec_json(&self) -> serde_json::Value {
        serde_json::json!({
            "dim": self.dim,
            "side": self.side,
            "geometry": match self.geometry { GeometryKind::Window => "window", GeometryKind::Torus => "torus" },
            "seed": self.seed,
            "bias": self.bias,
        })
    }
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    region: RegionArgs,
    /// Output path prefix.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct MatchArgs {
    #[command(flatten)]
    region: RegionArgs,
    #[arg(long, value_enum, default_value_t = RuleArg::Clump)]
    rule: RuleArg,
    /// Truncation level for the clump rule; at most one of kmax/margin.
    #[arg(long)]
    kmax: Option<u32>,
    /// Halo margin; converted to the largest level whose halo fits.
    #[arg(long)]
    margin: Option<u64>,
    /// Matching axis for the bracket rule (1-based; default: last).
    #[arg(long)]
    axis: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Also dump seed and edge-cut-level CSVs (clump rule).
    #[arg(long, default_value_t = false)]
    dump_cuts: bool,
}

#[derive(Args, Debug)]
struct TailArgs {
    #[command(flatten)]
    region: RegionArgs,
    #[arg(long, value_enum, default_value_t = RuleArg::Clump)]
    rule: RuleArg,
    #[arg(long, default_value_t = 1)]
    trials: u64,
    /// Radii: comma list `4,8,16` or half-octave range `4..512`.
    #[arg(long, default_value = "4..128")]
    radii: String,
    #[arg(long)]
    kmax: Option<u32>,
    #[arg(long)]
    margin: Option<u64>,
    #[arg(long)]
    axis: Option<usize>,
    /// Count cleanup pairs as real displacements.
    #[arg(long, default_value_t = false)]
    include_cleanup: bool,
    #[arg(long)]
    out: PathBuf,
    /// csv, json, or svg (svg adds a log-log plot with reference curves).
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    region: RegionArgs,
    #[arg(long, default_value_t = 25)]
    trials: u64,
}

#[derive(Args, Debug)]
struct EventsArgs {
    #[command(flatten)]
    region: RegionArgs,
    /// Levels to probe, comma-separated.
    #[arg(long, default_value = "4,5,6,7")]
    k: String,
    /// Scales s for cutter-hit events, comma-separated.
    #[arg(long, default_value = "4,16")]
    s: String,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let argv = apply_config_file(std::env::args().collect());
    let cli = Cli::parse_from(argv);
    init_threads();
    let outcome = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Match(args) => cmd_match(args),
        Command::Tail(args) => cmd_tail(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Events(args) => cmd_events(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Undecidable(_) => ExitCode::from(3),
                Error::InvalidArgument(_)
                | Error::DimensionMismatch { .. }
                | Error::Range(_)
                | Error::UnsupportedGeometry(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

/// Merge `key=value` lines of the config file into argv as `--key value`
/// pairs, unless the flag is already present.
fn apply_config_file(mut argv: Vec<String>) -> Vec<String> {
    let Some(pos) = argv.iter().position(|a| a == "--config") else {
        return argv;
    };
    let Some(path) = argv.get(pos + 1).cloned() else {
        return argv;
    };
    let Ok(text) = fs::read_to_string(&path) else {
        eprintln!("error: cannot read config file {path}");
        std::process::exit(2);
    };
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            eprintln!("error: config line without '=': {line}");
            std::process::exit(2);
        };
        let flag = format!("--{}", key.trim());
        if !argv.iter().any(|a| a == &flag) {
            argv.push(flag);
            argv.push(value.trim().to_string());
        }
    }
    argv
}

fn init_threads() {
    if let Ok(spec) = std::env::var("EQM_THREADS") {
        if let Ok(n) = spec.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn resolve_k_max(
    kmax: Option<u32>,
    margin: Option<u64>,
    d: u32,
    sides: &[u64],
    torus: bool,
) -> Result<Option<u32>, Error> {
    if kmax.is_some() && margin.is_some() {
        return Err(Error::invalid("give at most one of --kmax and --margin"));
    }
    if let Some(m) = margin {
        // Largest level whose halo (shift + radius + shell) fits the margin.
        let mut k = 0;
        while let Ok(r) = cutter_radius(k + 1, d) {
            let halo = (100.0 * r).floor() + r + (k + 1) as f64;
            if halo > m as f64 {
                break;
            }
            k += 1;
        }
        if k == 0 {
            return Err(Error::invalid(format!(
                "margin {m} too small for any cutter level"
            )));
        }
        return Ok(Some(if torus {
            k.min(torus_max_level(sides))
        } else {
            k
        }));
    }
    Ok(kmax)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Error> {
    let mut file = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_gen(args: GenArgs) -> Result<ExitCode, Error> {
    let geometry = args.region.geometry()?;
    let c = Configuration::generate(
        args.region.dim as usize,
        geometry,
        args.region.seed,
        args.region.bias,
    )?;
    let bin_path = with_suffix(&args.out, ".eqmz");
    let mut file = fs::File::create(&bin_path)?;
    write_configuration(&c, &mut file)?;
    let mut sidecar = configuration_sidecar(&c);
    sidecar["spec"] = args.region.spec_json();
    sidecar["tool_version"] = serde_json::json!(VERSION);
    write_json(&with_suffix(&args.out, ".json"), &sidecar)?;
    println!(
        "wrote {} sites to {} (+ sidecar)",
        c.site_count(),
        bin_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_match(args: MatchArgs) -> Result<ExitCode, Error> {
    let sides = args.region.sides()?;
    let torus = args.region.geometry == GeometryKind::Torus;
    let k_max = resolve_k_max(args.kmax, args.margin, args.region.dim, &sides, torus)?;
    let mut summary = serde_json::json!({
        "spec": args.region.spec_json(),
        "rule": match args.rule { RuleArg::Meshalkin => "meshalkin", RuleArg::Clump => "clump" },
        "tool_version": VERSION,
    });
    match args.rule {
        RuleArg::Meshalkin => {
            let c = Configuration::generate(
                args.region.dim as usize,
                args.region.geometry()?,
                args.region.seed,
                args.region.bias,
            )?;
            let axis = args.axis.unwrap_or(args.region.dim as usize);
            let m = meshalkin_lift(&c, axis)?;
            let mut file = fs::File::create(with_suffix(&args.out, ".matching.csv"))?;
            m.write_csv(&mut file)?;
            summary["n_sites"] = serde_json::json!(m.site_count());
            summary["n_pairs"] = serde_json::json!(m.pair_count());
            summary["censored"] = serde_json::json!(m.censored_count());
            summary["axis"] = serde_json::json!(axis);
        }
        RuleArg::Clump => {
            let build = if torus {
                let c = Configuration::generate(
                    args.region.dim as usize,
                    args.region.geometry()?,
                    args.region.seed,
                    args.region.bias,
                )?;
                build_torus(&c, k_max)?
            } else {
                let mut wp = WindowParams::new(
                    args.region.dim,
                    sides.clone(),
                    args.region.seed,
                    args.region.bias,
                );
                wp.k_max = k_max;
                build_window(&wp)?
            };
            let m = build.matching()?;
            let mut file = fs::File::create(with_suffix(&args.out, ".matching.csv"))?;
            m.write_csv(&mut file)?;
            if args.dump_cuts {
                let seeds: Vec<eqmatch::clumping::SeedRecord> = (2..=build.hierarchy.k_max())
                    .flat_map(|k| eqmatch::clumping::find_seeds(&build.config, k))
                    .collect();
                let mut f = fs::File::create(with_suffix(&args.out, ".seeds.csv"))?;
                write_seeds_csv(&seeds, args.region.dim as usize, &mut f)?;
                let mut f = fs::File::create(with_suffix(&args.out, ".cutlevels.csv"))?;
                write_cutlevels_csv(&build.cuts, &mut f)?;
            }
            let s = m.summary();
            summary["n_sites"] = serde_json::json!(s.n_sites);
            summary["n_pairs"] = serde_json::json!(s.n_pairs);
            summary["stage_pairs"] = serde_json::json!(s.stage_pairs);
            summary["cleanup_pairs"] = serde_json::json!(s.cleanup_pairs);
            summary["censored"] = serde_json::json!(s.censored);
            summary["unmatched"] = serde_json::json!(s.unmatched);
            summary["truncation"] = truncation_json(&build.hierarchy.truncation);
        }
    }
    write_json(&with_suffix(&args.out, ".summary.json"), &summary)?;
    println!("wrote {}", with_suffix(&args.out, ".summary.json").display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_tail(args: TailArgs) -> Result<ExitCode, Error> {
    let sides = args.region.sides()?;
    let torus = args.region.geometry == GeometryKind::Torus;
    let radii = parse_radii(&args.radii)?;
    let k_max = resolve_k_max(args.kmax, args.margin, args.region.dim, &sides, torus)?;
    let params = TailParams {
        rule: args.rule.into(),
        dimension: args.region.dim,
        sides,
        torus,
        trials: args.trials,
        rng_seed: args.region.seed,
        bias: args.region.bias,
        radii: radii.clone(),
        axis: args.axis.unwrap_or(args.region.dim as usize),
        k_max,
        residual_target: DEFAULT_RESIDUAL_TARGET,
        include_cleanup: args.include_cleanup,
    };
    let curve = estimate_tail(&params)?;
    let mut file = fs::File::create(with_suffix(&args.out, ".survival.csv"))?;
    curve.write_csv(&mut file)?;

    let fit = fit_exponent(&curve, radii[0], *radii.last().unwrap());
    let mut report = serde_json::json!({
        "spec": args.region.spec_json(),
        "rule": match args.rule { RuleArg::Meshalkin => "meshalkin", RuleArg::Clump => "clump" },
        "trials": args.trials,
        "radii": radii,
        "censored": curve.censored,
        "pooled_sites": curve.pooled_sites,
        "tool_version": VERSION,
    });
    match &fit {
        Ok(f) => {
            report["fit"] = serde_json::json!(f);
        }
        Err(e) => {
            report["fit_error"] = serde_json::json!(e.to_string());
        }
    }
    if args.rule == RuleArg::Clump && !torus {
        let d = args.region.dim;
        let s = *params.sides.iter().max().unwrap() as f64 / 2.0;
        let k = k_max.unwrap_or_else(|| k_max_for_residual(d, s, DEFAULT_RESIDUAL_TARGET));
        report["truncation_residual"] =
            serde_json::json!(eqmatch::clumping::truncation_bias(d, k, s));
        report["k_max"] = serde_json::json!(k);
    }
    write_json(&with_suffix(&args.out, ".fit.json"), &report)?;

    if args.format == "svg" {
        let d = args.region.dim;
        // Anchor the reference curves at the first radius with data.
        let anchor = curve
            .p_hat
            .iter()
            .zip(&curve.radii)
            .find(|(p, _)| p.is_finite() && **p > 0.0);
        if let Some((&p0, &r0)) = anchor {
            let refs: Vec<(String, Vec<(f64, f64)>)> = [
                (BoundKind::Main, "main bound shape"),
                (BoundKind::Preliminary, "preliminary shape"),
                (BoundKind::Ceiling, "ceiling exponent d/2"),
            ]
            .into_iter()
            .map(|(kind, label)| {
                let c = p0 / reference_bound(r0 as f64, d, 1.0, kind);
                let series: Vec<(f64, f64)> = curve
                    .radii
                    .iter()
                    .map(|&r| (r as f64, reference_bound(r as f64, d, c, kind)))
                    .collect();
                (label.to_string(), series)
            })
            .collect();
            let mut f = fs::File::create(with_suffix(&args.out, ".svg"))?;
            write_tail_svg(&curve, &refs, &mut f)?;
        }
    }
    if let Ok(f) = &fit {
        println!(
            "slope {:.4} +/- {:.4} over r in [{}, {}]",
            f.slope,
            f.stderr,
            radii[0],
            radii.last().unwrap()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode, Error> {
    let sides = args.region.sides()?;
    let d = args.region.dim;
    let mut failures = 0u32;
    let mut check = |name: &str, ok: bool| {
        println!("{}: {name}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    // Matching validity and unmatched-count law on random tori.
    let mut validity_ok = true;
    for t in 0..args.trials {
        let seed = derive_seed(args.region.seed, "verify-validity", t);
        let c = Configuration::generate(
            d as usize,
            Geometry::torus(sides.clone())?,
            seed,
            args.region.bias,
        )?;
        let build = build_torus(&c, None)?;
        let m = build.matching()?;
        if m.matching().validate(&c).is_err() {
            validity_ok = false;
            break;
        }
        let ones = c.count_ones() as i64;
        let zeros = c.site_count() as i64 - ones;
        if m.unmatched_count() != (ones - zeros).unsigned_abs() {
            validity_ok = false;
            break;
        }
    }
    check("matching validity (involution, opposite bits, unmatched count)", validity_ok);

    // Exact k-bad identity.
    let mut identity_ok = true;
    for t in 0..args.trials.min(20) {
        let seed = derive_seed(args.region.seed, "verify-identity", t);
        let c = Configuration::generate(
            d as usize,
            Geometry::torus(sides.clone())?,
            seed,
            args.region.bias,
        )?;
        let build = build_torus(&c, None)?;
        let m = build.matching()?;
        for k in 1..=build.hierarchy.k_max() {
            let (lhs, rhs) = eqmatch::events::verify_kbad_identity(&c, &build.hierarchy, &m, k)?;
            if lhs != rhs {
                identity_ok = false;
            }
        }
    }
    check("k-bad identity (exact rationals)", identity_ok);

    // Equivariance spot check.
    let mut equivariance_ok = true;
    {
        let seed = derive_seed(args.region.seed, "verify-equivariance", 0);
        let g = Geometry::torus(sides.clone())?;
        let base = Configuration::generate(d as usize, g.clone(), seed, args.region.bias)?;
        let base_match = build_torus(&base, None)?.matching()?;
        let mut stream = eqmatch::lattice::SeedStream::new(seed);
        for _ in 0..5 {
            let z: Vec<i64> = sides.iter().map(|&s| stream.next_below(s) as i64).collect();
            let shifted = base.translate(&z)?;
            let m = build_torus(&shifted, None)?.matching()?;
            for index in 0..base.site_count() {
                let coords = g.coords_of(index);
                let moved: Vec<i64> = coords.iter().zip(&z).map(|(c, dz)| c + dz).collect();
                let moved_idx = g.index_of(&moved).unwrap();
                let a = base_match.matching().partner_index(index).map(|p| {
                    let pc = g.coords_of(p);
                    let e: Vec<i64> = pc.iter().zip(&z).map(|(c, dz)| c + dz).collect();
                    g.index_of(&e).unwrap()
                });
                let b = m.matching().partner_index(moved_idx);
                if a != b {
                    equivariance_ok = false;
                    break;
                }
            }
        }
    }
    check("translation equivariance (torus, staged rule)", equivariance_ok);

    // Bracket rule against its quadratic oracle.
    let mut oracle_ok = true;
    {
        let mut stream =
            eqmatch::lattice::SeedStream::new(derive_seed(args.region.seed, "verify-oracle", 0));
        for _ in 0..200 {
            let len = 1 + stream.next_below(40) as usize;
            let bits: Vec<bool> = (0..len).map(|_| stream.next_u64() & 1 == 1).collect();
            for topology in [
                eqmatch::meshalkin::LineTopology::Line,
                eqmatch::meshalkin::LineTopology::Cycle,
            ] {
                let a = eqmatch::meshalkin::meshalkin_match_line(&bits, topology);
                let b = eqmatch::meshalkin::naive_bracket_oracle(&bits, topology);
                let mut pa: Vec<_> = a.pairs().map(|(x, y, _)| (x.min(y), x.max(y))).collect();
                let mut pb: Vec<_> = b.pairs().map(|(x, y, _)| (x.min(y), x.max(y))).collect();
                pa.sort_unstable();
                pb.sort_unstable();
                if pa != pb {
                    oracle_ok = false;
                }
            }
        }
    }
    check("bracket matching vs quadratic oracle", oracle_ok);

    if failures == 0 {
        println!("verify: all checks passed");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("verify: {failures} check(s) failed");
        Ok(ExitCode::from(1))
    }
}

fn parse_list<T: std::str::FromStr>(spec: &str, what: &str) -> Result<Vec<T>, Error> {
    spec.split(',')
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|_| Error::invalid(format!("bad {what} {p}")))
        })
        .collect()
}

fn cmd_events(args: EventsArgs) -> Result<ExitCode, Error> {
    use rayon::prelude::*;
    let d = args.region.dim;
    let levels: Vec<u32> = parse_list(&args.k, "level")?;
    let scales: Vec<f64> = parse_list(&args.s, "scale")?;
    if args.trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let mut rows = Vec::new();
    println!("event,k,s,occurrences,trials,p_hat,bound,p_hat_le_bound_plus_3se");
    for &k in &levels {
        let hits: u64 = (0..args.trials)
            .into_par_iter()
            .map(|t| {
                let field = BitField::new(
                    derive_seed(args.region.seed, "events-enclosed", t),
                    args.region.bias,
                )
                .unwrap();
                let origin = vec![0i64; d as usize];
                let report = detect_enclosed_field(&field, d, k, &origin).unwrap();
                (!report.occurred) as u64
            })
            .sum();
        let p = hits as f64 / args.trials as f64;
        let bound = (-(k as f64)).exp();
        let se = (p * (1.0 - p) / args.trials as f64).sqrt();
        let ok = p <= bound + 3.0 * se;
        println!(
            "enclosure_failure,{k},,{hits},{},{p:.6e},{bound:.6e},{ok}",
            args.trials
        );
        rows.push(serde_json::json!({
            "event": "enclosure_failure", "k": k, "occurrences": hits,
            "trials": args.trials, "p_hat": p, "bound": bound, "within_bound": ok,
        }));
    }
    for &k in &levels {
        for &s in &scales {
            let hits: u64 = (0..args.trials)
                .into_par_iter()
                .map(|t| {
                    let field = BitField::new(
                        derive_seed(args.region.seed, "events-hits", t),
                        args.region.bias,
                    )
                    .unwrap();
                    let report = detect_cutter_hits_field(&field, d, k, s).unwrap();
                    report.occurred as u64
                })
                .sum();
            let p = hits as f64 / args.trials as f64;
            let bound =
                eqmatch::clumping::annulus_site_count(k, d, s)? * 0.5f64.powi(k as i32);
            let se = (p * (1.0 - p) / args.trials as f64).sqrt();
            let ok = p <= bound + 3.0 * se;
            println!(
                "cutter_hit,{k},{s},{hits},{},{p:.6e},{bound:.6e},{ok}",
                args.trials
            );
            rows.push(serde_json::json!({
                "event": "cutter_hit", "k": k, "s": s, "occurrences": hits,
                "trials": args.trials, "p_hat": p, "bound": bound, "within_bound": ok,
            }));
        }
    }
    let all_ok = rows.iter().all(|r| r["within_bound"] == true);
    if let Some(out) = &args.out {
        let exps = TailExponents::for_dimension(d);
        let report = serde_json::json!({
            "spec": args.region.spec_json(),
            "levels": levels,
            "scales": scales,
            "trials": args.trials,
            "exponents": exps,
            "rows": rows,
            "all_within_bounds": all_ok,
            "tool_version": VERSION,
        });
        write_json(&with_suffix(out, ".events.json"), &report)?;
    }
    Ok(if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
