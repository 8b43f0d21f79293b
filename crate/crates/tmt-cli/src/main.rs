//! Command-line front end: table reproduction, compression and avalanche
//! benchmarks, block building against a simulated CAS, and an end-to-end
//! demo of the broadcast chain with client lookups.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tmt_core::blockstore::{self, CasStore, LookupResult};
use tmt_core::error::Error;
use tmt_core::rootoftrust::RootOfTrust;
use tmt_core::shuffleshift;
use tmt_core::{pathstats, plschain, tunstall};

/// `println!` that swallows a closed pipe instead of panicking (`tmt ... | head`).
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(name = "tmt", version, about = "Tunstall-Merkle tree block indexing toolkit")]
struct Cli {
    /// key=value config file; also read from $TMT_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Machine-readable CSV instead of aligned tables.
    #[arg(long, global = true)]
    csv: bool,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared across subcommands; any flag beats the config file.
#[derive(Args, Debug, Clone)]
struct Common {
    /// Address-space size (power of two).
    #[arg(long)]
    n: Option<usize>,
    /// Per-user activity probability.
    #[arg(long)]
    p: Option<f64>,
    /// Tunstall codeword width (4 or 8).
    #[arg(long)]
    w: Option<u8>,
    /// Base permutation rounds.
    #[arg(long)]
    base_t: Option<u32>,
    /// RNG seed; every command is deterministic under a fixed seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory-backed CAS; in-memory when absent.
    #[arg(long)]
    cas_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct Config {
    n: usize,
    p: f64,
    w: u8,
    base_t: u32,
    seed: u64,
    cas_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Config {
        Config {
            n: 1024,
            p: 0.1,
            w: 4,
            base_t: shuffleshift::DEFAULT_BASE_ROUNDS,
            seed: 1,
            cas_dir: None,
        }
    }
}

impl Config {
    fn load(path: Option<&PathBuf>, flags: &Common) -> Result<Config, Error> {
        let mut cfg = Config::default();
        let path = path
            .cloned()
            .or_else(|| std::env::var_os("TMT_CONFIG").map(PathBuf::from));
        if let Some(path) = path {
            let text = std::fs::read_to_string(&path)?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
                let (key, value) = (key.trim(), value.trim());
                let bad = |e: &dyn std::fmt::Display| Error::Config(format!("{key}: {e}"));
                match key {
                    "n" => cfg.n = value.parse().map_err(|e| bad(&e))?,
                    "p" => cfg.p = value.parse().map_err(|e| bad(&e))?,
                    "w" => cfg.w = value.parse().map_err(|e| bad(&e))?,
                    "base_t" => cfg.base_t = value.parse().map_err(|e| bad(&e))?,
                    "seed" => cfg.seed = value.parse().map_err(|e| bad(&e))?,
                    "cas-directory" => cfg.cas_dir = Some(PathBuf::from(value)),
                    other => return Err(Error::Config(format!("unknown key '{other}'"))),
                }
            }
        }
        if let Some(n) = flags.n {
            cfg.n = n;
        }
        if let Some(p) = flags.p {
            cfg.p = p;
        }
        if let Some(w) = flags.w {
            cfg.w = w;
        }
        if let Some(t) = flags.base_t {
            cfg.base_t = t;
        }
        if let Some(s) = flags.seed {
            cfg.seed = s;
        }
        if let Some(dir) = &flags.cas_dir {
            cfg.cas_dir = Some(dir.clone());
        }
        if !cfg.n.is_power_of_two() || cfg.n > 4096 {
            return Err(Error::Config(format!("n = {} must be a power of two <= 4096", cfg.n)));
        }
        if !(cfg.p > 0.0 && cfg.p < 1.0) {
            return Err(Error::Config(format!("p = {} outside (0, 1)", cfg.p)));
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Path-weight distribution of the sparse tree per level.
    Stats {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2)]
        k_min: u32,
        #[arg(long, default_value_t = 10)]
        k_max: u32,
        /// Add Monte-Carlo oracle columns.
        #[arg(long)]
        oracle: bool,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
    },
    /// Dump the Tunstall dictionary for (p, w).
    Codebook {
        #[command(flatten)]
        common: Common,
    },
    /// Compression ratio and redundancy over random input.
    CompressBench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1_000_000)]
        bits: usize,
    },
    /// Avalanche matrix of the ID permutation.
    Avalanche {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        d: u32,
        #[arg(long, default_value_t = 200)]
        t: u32,
        #[arg(long, default_value_t = 50)]
        samples: usize,
    },
    /// Build one block of seeded random records and publish it.
    BuildBlock {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        block: u64,
    },
    /// Look a user up in a deterministically rebuilt block.
    Lookup {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        block: u64,
        #[arg(long)]
        id: u64,
    },
    /// Full protocol run: chain, blocks, and a client following one user.
    Demo {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        blocks: u64,
        /// Raw ID the client keeps probing for.
        #[arg(long, default_value_t = 45)]
        follow: u64,
    },
    /// Hex dump of the broadcast chain, one interval per stanza.
    PlsTranscript {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        intervals: u64,
    },
}

/// Deterministic per-block record set: each id contributes with probability
/// p, record bytes derived from (block, id).
fn gen_records(block: u64, n: usize, p: f64, seed: u64) -> Vec<(u64, Vec<u8>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ block.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    (0..n as u64)
        .filter(|_| rng.gen_bool(p))
        .map(|id| (id, format!("blk{block}-user{id}").into_bytes()))
        .collect()
}

fn mode_name(rot: &RootOfTrust) -> &'static str {
    use tmt_core::rootoftrust::BitmapMode::*;
    match rot.mode {
        Plain => "plain",
        Compressed => "compressed",
        List => "list",
        Empty => "empty",
    }
}

fn cmd_stats(cfg: &Config, k_min: u32, k_max: u32, oracle: bool, trials: usize, csv: bool) -> Result<(), Error> {
    if k_min < 1 || k_min > k_max || k_max > 24 {
        return Err(Error::Config(format!("bad level range {k_min}..{k_max}")));
    }
    if csv {
        out!("k,mean,oracle_mean,probs_percent");
    } else {
        out!("path-weight distribution, p = {}", cfg.p);
        out!("{:>3} {:>7}  {}", "k", "mean", "Pr(weight = i) in %, i = 0..k");
    }
    for k in k_min..=k_max {
        let d = pathstats::pdf(k, cfg.p)?;
        let cells: Vec<String> = d.probs.iter().map(|q| format!("{:.1}", q * 100.0)).collect();
        let mc_mean = if oracle {
            Some(pathstats::monte_carlo_pdf(k, cfg.p, trials, cfg.seed)?.mean())
        } else {
            None
        };
        if csv {
            out!(
                "{k},{:.3},{},{}",
                d.mean(),
                mc_mean.map(|m| format!("{m:.3}")).unwrap_or_default(),
                cells.join(";")
            );
        } else {
            let oracle_col = mc_mean.map(|m| format!(" (mc {m:.3})")).unwrap_or_default();
            out!("{k:>3} {:>7.3}{oracle_col}  {}", d.mean(), cells.join(" "));
        }
    }
    Ok(())
}

fn cmd_codebook(cfg: &Config, csv: bool) -> Result<(), Error> {
    let cb = tunstall::TunstallCodebook::build(cfg.p, cfg.w)?;
    if csv {
        out!("codeword,chunk,neg_log2_likelihood");
    } else {
        out!("Tunstall dictionary, p = {}, w = {}", cfg.p, cfg.w);
    }
    for entry in cb.entries() {
        let chunk: String = entry.chunk.iter().map(|&b| if b { '1' } else { '0' }).collect();
        if csv {
            out!("{},{chunk},{:.3}", entry.codeword, entry.neg_log2_likelihood);
        } else {
            out!("{:>4}  {chunk:<16} {:>6.2}", entry.codeword, entry.neg_log2_likelihood);
        }
    }
    Ok(())
}

fn cmd_compress_bench(cfg: &Config, bits: usize, csv: bool) -> Result<(), Error> {
    let report = tunstall::measure(cfg.p, cfg.w, bits, cfg.seed)?;
    if csv {
        out!("p,w,n_bits,codewords,kappa,h0,rho_percent");
        out!(
            "{},{},{},{},{:.4},{:.4},{:.2}",
            cfg.p, cfg.w, report.n, report.r, report.kappa, report.h0, report.rho * 100.0
        );
    } else {
        out!(
            "p = {}, w = {}: {} bits -> {} codewords, kappa = {:.4}, H0 = {:.4}, redundancy = {:.2}%",
            cfg.p, cfg.w, report.n, report.r, report.kappa, report.h0, report.rho * 100.0
        );
    }
    Ok(())
}

fn cmd_avalanche(cfg: &Config, d: u32, t: u32, samples: usize, csv: bool) -> Result<(), Error> {
    let report = shuffleshift::avalanche(d, t, samples, cfg.seed)?;
    if csv {
        out!("d,t,samples,delta");
        out!("{d},{t},{samples},{:.4}", report.delta);
    } else {
        out!(
            "avalanche d = {d}, t = {t}, {samples} block samples: delta = {:.4}",
            report.delta
        );
    }
    Ok(())
}

fn make_store(cfg: &Config) -> Result<CasStore, Error> {
    match &cfg.cas_dir {
        Some(dir) if dir.exists() => CasStore::open_directory(dir),
        Some(dir) => CasStore::with_directory(dir),
        None => Ok(CasStore::new()),
    }
}

fn cmd_build_block(cfg: &Config, block: u64, csv: bool) -> Result<(), Error> {
    let records = gen_records(block, cfg.n, cfg.p, cfg.seed);
    let mut cas = make_store(cfg)?;
    let built = blockstore::build_block(block, &records, cfg.n, cfg.base_t, &mut cas)?;
    let rot_bytes = built.rot.encode()?;
    if csv {
        out!("block,m,mode,extra_rounds,payload_bits,rot_bytes,cas_digest");
        out!(
            "{block},{},{},{},{},{},{}",
            built.rot.m,
            mode_name(&built.rot),
            built.rot.extra_rounds,
            built.rot.payload_bits(),
            rot_bytes.len(),
            hex::encode(built.digest)
        );
    } else {
        out!("block {block}: m = {} of n = {}", built.rot.m, cfg.n);
        out!(
            "root-of-trust: mode = {}, extra rounds = {}, payload = {} bits, total = {} bytes",
            mode_name(&built.rot),
            built.rot.extra_rounds,
            built.rot.payload_bits(),
            rot_bytes.len()
        );
        out!("rot hex: {}", hex::encode(&rot_bytes));
        out!("cas digest: {}", hex::encode(built.digest));
    }
    Ok(())
}

fn cmd_lookup(cfg: &Config, block: u64, id: u64, csv: bool) -> Result<(), Error> {
    let records = gen_records(block, cfg.n, cfg.p, cfg.seed);
    // The root of trust is always the honestly rebuilt one (it travels over
    // the authenticated chain); paths come from the possibly tampered store.
    let mut scratch = CasStore::new();
    let built = blockstore::build_block(block, &records, cfg.n, cfg.base_t, &mut scratch)?;
    let cas = match &cfg.cas_dir {
        Some(dir) => CasStore::open_directory(dir)?,
        None => scratch,
    };
    let result = blockstore::client_lookup(&built.rot, block, id, cfg.base_t, &cas)?;
    let cost = blockstore::comm_cost(&result);
    match &result {
        LookupResult::Absent { position } => {
            if csv {
                out!("block,id,result,position,verified,comm_bytes");
                out!("{block},{id},absent,{position},,0");
            } else {
                out!("block {block}, id {id}: absent (permuted position {position}), {cost} bytes exchanged");
            }
        }
        LookupResult::Present { record_digest, path, verified } => {
            if csv {
                out!("block,id,result,local_index,verified,comm_bytes");
                out!("{block},{id},present,{},{verified},{cost}", path.leaf_index);
            } else {
                out!(
                    "block {block}, id {id}: present at local index {}, verified = {verified}, {} adjuncts, {cost} bytes",
                    path.leaf_index,
                    path.adjuncts.len()
                );
                out!("record digest: {}", hex::encode(record_digest));
            }
            if !verified {
                return Err(Error::Transport("path verification failed against the tree root".into()));
            }
        }
    }
    Ok(())
}

fn cmd_demo(cfg: &Config, blocks: u64, follow: u64, csv: bool) -> Result<(), Error> {
    if follow >= cfg.n as u64 {
        return Err(Error::IdOutOfRange { id: follow, n: cfg.n as u64 });
    }
    let mut cas = make_store(cfg)?;
    let mut seq = plschain::Sequencer::new(cfg.seed);
    let mut p_prev = seq.anchor();
    let mut pending: Option<plschain::PlsInterval> = None;

    // Baseline: the sparse tree indexed by raw ID serves every probe with
    // ~mean path-weight adjunct hashes, absent or not.
    let k = cfg.n.trailing_zeros();
    let baseline_per_probe = 32.0 * pathstats::pdf(k, cfg.p)?.mean();

    let mut tmt_bytes = 0u64;
    let mut absent = 0u64;
    let mut failures = 0u64;
    if csv {
        out!("block,result,verified,comm_bytes,served_total");
    }
    for number in 0..blocks {
        let records = gen_records(number, cfg.n, cfg.p, cfg.seed);
        let built = blockstore::build_block(number, &records, cfg.n, cfg.base_t, &mut cas)?;
        let interval = seq.broadcast(&built.rot.encode()?);

        // The client sees block `number` only through the chain: interval
        // k+1 verifies interval k and unlocks its payload.
        if let Some(prev) = pending.replace(interval) {
            if !plschain::verify_interval(&prev.l, &pending.as_ref().unwrap().p, &p_prev) {
                return Err(Error::UnlockRejected("chain verification failed"));
            }
            let (_, rot) = plschain::unlock(&pending.as_ref().unwrap().p, &prev.l, &prev.s)?;
            p_prev = pending.as_ref().unwrap().p;

            let result = blockstore::client_lookup(&rot, prev.k as u64, follow, cfg.base_t, &cas)?;
            let cost = blockstore::comm_cost(&result) as u64;
            tmt_bytes += cost;
            let (tag, verified) = match &result {
                LookupResult::Absent { .. } => {
                    absent += 1;
                    ("absent", String::new())
                }
                LookupResult::Present { verified, .. } => {
                    if !verified {
                        failures += 1;
                    }
                    ("present", verified.to_string())
                }
            };
            if csv {
                out!("{},{tag},{verified},{cost},{}", prev.k, cas.served_bytes());
            } else {
                out!("block {:>4}: {tag:<7} {verified:<5} {cost:>4} B", prev.k);
            }
        }
    }
    let probes = blocks.saturating_sub(1);
    let baseline = baseline_per_probe * probes as f64;
    if !csv {
        out!("---");
        out!(
            "{probes} probes for id {follow}: {absent} absent (zero store traffic), {} present, {failures} failed verification",
            probes - absent
        );
        out!(
            "client traffic: TMT {tmt_bytes} B vs sparse-MT baseline ~{baseline:.0} B ({:.1} B/probe analytic)",
            baseline_per_probe
        );
    }
    if failures > 0 {
        return Err(Error::Transport(format!("{failures} lookups failed verification")));
    }
    Ok(())
}

fn cmd_pls_transcript(cfg: &Config, intervals: u64, csv: bool) -> Result<(), Error> {
    let mut seq = plschain::Sequencer::new(cfg.seed);
    if !csv {
        out!("anchor P0: {}", hex::encode(seq.anchor()));
    } else {
        out!("interval,message,hex");
        out!("-1,P0,{}", hex::encode(seq.anchor()));
    }
    for number in 0..intervals {
        let records = gen_records(number, cfg.n, cfg.p, cfg.seed);
        let mut cas = CasStore::new();
        let built = blockstore::build_block(number, &records, cfg.n, cfg.base_t, &mut cas)?;
        let interval = seq.broadcast(&built.rot.encode()?);
        if csv {
            out!("{},L,{}", interval.k, hex::encode(interval.l));
            out!("{},S,{}", interval.k, hex::encode(&interval.s));
            out!("{},P,{}", interval.k, hex::encode(interval.p));
        } else {
            out!();
            out!("interval {}", interval.k);
            out!("  L: {}", hex::encode(interval.l));
            out!("  S: {}", hex::encode(&interval.s));
            out!("  P: {}", hex::encode(interval.p));
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let csv = cli.csv;
    match &cli.command {
        Command::Stats { common, k_min, k_max, oracle, trials } => {
            let cfg = Config::load(cli.config.as_ref(), common)?;
            cmd_stats(&cfg, *k_min, *k_max, *oracle, *trials, csv)
        }
        Command::Codebook { common } => {
            let cfg = Config::load(cli.config.as_ref(), common)?;
            cmd_codebook(&cfg, csv)
        }
        Command::CompressBench { common, bits } => {
            let cfg = Config::load(cli.config.as_ref(), common)?;
            cmd_compress_bench(&cfg, *bits, csv)
        }
        Command::Avalanche { common, d, t, samples } => {
            let cfg = Config::load(cli.config.as_ref(), common)?;
            cmd_avalanche(&cfg, *d, *t, *samples, csv)
        }
        Command::BuildBlock { common, block } => {
            let cfg = Config::load(cli.config.as_ref(), common)?;
            cmd_build_block(&cfg, *block, csv)
        }
        Command::Lookup { common, block, id } => {
            let cfg = Config::load(cli.config.as_ref(), common)?;
            cmd_lookup(&cfg, *block, *id, csv)
        }
        Command::Demo { common, blocks, follow } => {
            let cfg = Config::load(cli.config.as_ref(), common)?;
            cmd_demo(&cfg, *blocks, *follow, csv)
        }
        Command::PlsTranscript { common, intervals } => {
            let cfg = Config::load(cli.config.as_ref(), common)?;
            cmd_pls_transcript(&cfg, *intervals, csv)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tmt: {e}");
            ExitCode::FAILURE
        }
    }
}
