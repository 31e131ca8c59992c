use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use objmark::attacks::{attack_pipeline, sample_attack, AttackRanges, AttackSpec, DistortionSpec};
use objmark::codec::{
    self, make_plan, parse_key, MessageBits, DEFAULT_BLOCK_SIZE, DEFAULT_STRENGTH,
};
use objmark::corpus::{desk_corpus, save_corpus};
use objmark::eval::{occupancy_path, run_eval, EvalConfig};
use objmark::metrics::{psnr, ssim};
use objmark::ssync::{synchronize_with, SyncOptions, DEFAULT_CANVAS};
use objmark::{BinaryMask, Error, Image};

/// Object-aligned blind watermarking toolkit.
#[derive(Parser)]
#[command(name = "objmark", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PlanArgs {
    /// 64-bit key in hex.
    #[arg(long)]
    key: String,
    /// Canvas side of the synchronized domain.
    #[arg(long, default_value_t = DEFAULT_CANVAS)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_BLOCK_SIZE)]
    block_size: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Embed a message into the object of an image.
    Embed {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// Bit string such as 0110…, or hex with a 0x prefix.
        #[arg(long)]
        message: String,
        #[command(flatten)]
        plan: PlanArgs,
        /// Embedding strength in intensity units.
        #[arg(long, default_value_t = DEFAULT_STRENGTH)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cut the object out, paste it into a background, and apply distortions.
    Attack {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        background: PathBuf,
        /// JSON attack specification to replay.
        #[arg(long, conflicts_with = "seed", required_unless_present = "seed")]
        spec: Option<PathBuf>,
        /// Draw a random attack from the default ranges.
        #[arg(long)]
        seed: Option<u64>,
        /// Distortion as kind=value, applied in the order given.
        #[arg(long = "distort")]
        distortions: Vec<DistortionSpec>,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the ground-truth mask of the pasted object.
        #[arg(long)]
        mask_out: Option<PathBuf>,
    },
    /// Normalize an object into the canonical canvas.
    Sync {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CANVAS)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        /// JSON file receiving the transform and source features.
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(long)]
        mask_out: Option<PathBuf>,
    },
    /// Extract a message from the object of a suspect image.
    Decode {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[command(flatten)]
        plan: PlanArgs,
        /// Message length in bits.
        #[arg(long)]
        length: usize,
    },
    /// Run a corpus evaluation and write the results CSV.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the output path of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic desk corpus as PNG files.
    GenCorpus {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = objmark::corpus::DEFAULT_DESK_COUNT)]
        count: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NoSignal(_) => 3,
        Error::PlacementInfeasible(_) => 4,
        _ => 2,
    }
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn load_pair(image: &Path, mask: &Path) -> objmark::Result<(Image, BinaryMask)> {
    Ok((Image::load(image)?, BinaryMask::load(mask)?))
}

fn run(cli: Cli) -> objmark::Result<()> {
    match cli.command {
        Command::Embed {
            image,
            mask,
            message,
            plan,
            alpha,
            out,
        } => {
            let (host, mask) = load_pair(&image, &mask)?;
            let msg = MessageBits::parse(&message)?;
            let p = make_plan(parse_key(&plan.key)?, plan.n, plan.block_size, msg.len())?
                .with_strength(alpha)?;
            let wm = codec::embed_into_host(&host, &mask, &msg, &p, plan.n)?.quantized();
            wm.save(&out)?;
            print_json(&serde_json::json!({
                "out": out,
                "bits": msg.to_bit_string(),
                "psnr": psnr(&wm, &host, None)?,
                "ssim": ssim(&wm, &host).ok(),
            }));
        }
        Command::Attack {
            image,
            mask,
            background,
            spec,
            seed,
            distortions,
            out,
            mask_out,
        } => {
            let (img, mask) = load_pair(&image, &mask)?;
            let bg = Image::load(&background)?;
            let mut attack: AttackSpec = match (spec, seed) {
                (Some(path), _) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
                (None, Some(s)) => sample_attack(s, &mask, bg.dims(), &AttackRanges::default())?,
                (None, None) => unreachable!("clap requires --spec or --seed"),
            };
            if attack.background_id.is_empty() {
                attack.background_id = background.display().to_string();
            }
            let (composite, gt) =
                attack_pipeline(&img, &mask, &bg, &attack, &distortions, seed.unwrap_or(0))?;
            composite.save(&out)?;
            if let Some(p) = mask_out {
                gt.save(p)?;
            }
            print_json(&serde_json::to_value(&attack)?);
        }
        Command::Sync {
            image,
            mask,
            n,
            out,
            record,
            mask_out,
        } => {
            let (img, mask) = load_pair(&image, &mask)?;
            let (obj, rec) = synchronize_with(&img, &mask, &SyncOptions::with_n(n))?;
            obj.canvas().save(&out)?;
            if let Some(p) = mask_out {
                obj.mask().save(p)?;
            }
            let json = serde_json::to_string_pretty(&rec)?;
            match record {
                Some(p) => std::fs::write(p, json)?,
                None => println!("{json}"),
            }
        }
        Command::Decode {
            image,
            mask,
            plan,
            length,
        } => {
            let (img, mask) = load_pair(&image, &mask)?;
            let p = make_plan(parse_key(&plan.key)?, plan.n, plan.block_size, length)?;
            let report = codec::decode(&img, &mask, &p, &SyncOptions::with_n(plan.n))?;
            print_json(&serde_json::json!({
                "bits": report.bits.to_bit_string(),
                "mean_confidence": report.mean_confidence(),
                "per_bit_confidence": report.per_bit_confidence,
                "used_blocks": report.used_blocks,
                "rotated_180": report.rotated_180,
            }));
        }
        Command::Eval { config, out } => {
            let mut cfg = EvalConfig::from_json_file(&config)?;
            if out.is_some() {
                cfg.output = out;
            }
            let Some(path) = cfg.output.clone() else {
                return Err(Error::InvalidArgument(
                    "no output path: pass --out or set \"output\" in the config".into(),
                ));
            };
            let records = run_eval(&cfg)?;
            let failures = records.iter().filter(|r| !r.error.is_empty()).count();
            let violations = records.iter().filter(|r| r.sanity_violation).count();
            print_json(&serde_json::json!({
                "records": records.len(),
                "failures": failures,
                "sanity_violations": violations,
                "results": path,
                "occupancy": occupancy_path(&path),
            }));
        }
        Command::GenCorpus {
            seed,
            count,
            out_dir,
        } => {
            let corpus = desk_corpus(seed, count)?;
            save_corpus(&corpus, &out_dir)?;
            print_json(&serde_json::json!({
                "items": corpus.items.len(),
                "backgrounds": corpus.backgrounds.len(),
                "out_dir": out_dir,
            }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
