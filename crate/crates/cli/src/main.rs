use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use attnclust_core::grabcut::{
    apply_mask, grabcut_segment_with, load_image, parse_strokes, GrabcutParams, Rect, Rgb,
};
use attnclust_core::metrics::{evaluate_with, NmiNormalization};
use attnclust_core::pipeline::{
    emit_report, execute, format_labels, load_labels, write_features, ExperimentConfig,
};
use attnclust_core::synthetic::{gaussian_blobs, two_color_image};
use attnclust_core::dtc::jitter_features;

mod batch;

#[derive(Parser)]
#[command(name = "attnclust", version, about = "GrabCut preprocessing and deep transfer clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one clustering experiment.
    Run {
        /// key=value config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// key=value overrides; these win over the file.
        overrides: Vec<String>,
    },
    /// Segment one image and write its mask as PGM.
    Grabcut {
        #[arg(long)]
        image: PathBuf,
        /// x,y,w,h
        #[arg(long)]
        bbox: Rect,
        /// Lines of `fg|bg x0 y0 x1 y1`.
        #[arg(long)]
        strokes: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the image with background replaced by --fill.
        #[arg(long)]
        masked_out: Option<PathBuf>,
        #[command(flatten)]
        opts: GrabcutOpts,
    },
    /// Segment every image listed in a manifest CSV, in parallel.
    GrabcutBatch {
        /// Rows of `image_path,x,y,w,h[,strokes_path]`; a header row is optional.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        opts: GrabcutOpts,
    },
    /// Score predicted labels against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Use the arithmetic mean of entropies for NMI.
        #[arg(long)]
        arithmetic_nmi: bool,
    },
    /// Serve the annotation HTTP API and, optionally, a static UI bundle.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        /// Idle seconds before a session is dropped.
        #[arg(long, default_value_t = 3600)]
        ttl_secs: u64,
    },
    /// Write a synthetic Gaussian-blob dataset (features, labels, jittered view).
    SynthBlobs(SynthBlobs),
    /// Write a synthetic two-color scene with its ground-truth mask and box.
    SynthScene {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Clone)]
struct GrabcutOpts {
    #[arg(long, default_value_t = 5)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50.0)]
    gamma: f64,
    #[arg(long, default_value_t = 5)]
    components: usize,
    /// Fill color for masked images, r,g,b.
    #[arg(long, default_value = "0,0,0", value_parser = parse_rgb)]
    fill: Rgb,
}

impl GrabcutOpts {
    fn params(&self) -> GrabcutParams {
        GrabcutParams {
            components: self.components,
            gamma: self.gamma,
            ..GrabcutParams::default()
        }
    }
}

#[derive(Args)]
struct SynthBlobs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Distance between adjacent blob means, in units of sigma.
    #[arg(long, default_value_t = 10.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write transformed.dtcf with this much Gaussian jitter.
    #[arg(long)]
    jitter_sigma: Option<f64>,
}

fn parse_rgb(s: &str) -> Result<Rgb, String> {
    let parts: Vec<u8> = s
        .split(',')
        .map(|p| p.trim().parse::<u8>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("color '{s}': {e}"))?;
    parts
        .try_into()
        .map_err(|_| format!("color '{s}' must be r,g,b"))
}

/// A failure with its process exit status.
pub(crate) struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub(crate) fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub(crate) fn data(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

fn write_file(path: &std::path::Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| Failure::data(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn run(config: Option<PathBuf>, overrides: Vec<String>) -> Result<(), Failure> {
    let cfg = ExperimentConfig::from_sources(config.as_deref(), &overrides).map_err(|e| Failure {
        code: e.exit_code() as u8,
        message: e.to_string(),
    })?;
    let outcome = execute(&cfg).map_err(|e| Failure {
        code: e.exit_code() as u8,
        message: e.to_string(),
    })?;
    print!("{}", emit_report(&outcome.report, attnclust_core::pipeline::ReportFormat::Text));
    eprintln!(
        "wrote report, assignments and timing to {} (train {:.2}s)",
        cfg.output_dir.display(),
        outcome.timing.train_s
    );
    Ok(())
}

fn grabcut(
    image: PathBuf,
    bbox: Rect,
    strokes: Option<PathBuf>,
    out: PathBuf,
    masked_out: Option<PathBuf>,
    opts: GrabcutOpts,
) -> Result<(), Failure> {
    let img = load_image(&image).map_err(|e| Failure::data(format!("{}: {e}", image.display())))?;
    let strokes = match strokes {
        Some(p) => {
            let text = std::fs::read_to_string(&p)
                .map_err(|e| Failure::data(format!("{}: {e}", p.display())))?;
            parse_strokes(&text).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?
        }
        None => Vec::new(),
    };
    let mask = grabcut_segment_with(&img, bbox, &strokes, opts.iters, opts.seed, &opts.params())
        .map_err(|e| Failure::config(e.to_string()))?;
    write_file(&out, mask.to_pgm())?;
    if let Some(p) = masked_out {
        let masked = apply_mask(&img, &mask, opts.fill).map_err(|e| Failure::data(e.to_string()))?;
        write_file(&p, masked.to_ppm())?;
    }
    eprintln!("{} foreground pixels", mask.foreground_count());
    Ok(())
}

fn eval(pred: PathBuf, truth: PathBuf, arithmetic: bool) -> Result<(), Failure> {
    let load = |p: &PathBuf| load_labels(p).map_err(|e| Failure::data(format!("{}: {e}", p.display())));
    let (p, t) = (load(&pred)?, load(&truth)?);
    let norm = if arithmetic {
        NmiNormalization::Arithmetic
    } else {
        NmiNormalization::Geometric
    };
    let s = evaluate_with(&p, &t, norm).map_err(|e| Failure::data(e.to_string()))?;
    println!("acc={:.4} nmi={:.4} ari={:.4}", s.acc, s.nmi, s.ari);
    Ok(())
}

fn serve(host: std::net::IpAddr, port: u16, ui_dir: Option<PathBuf>, ttl_secs: u64) -> Result<(), Failure> {
    if let Some(dir) = &ui_dir {
        if !dir.is_dir() {
            return Err(Failure::config(format!("ui dir {} is not a directory", dir.display())));
        }
    }
    let config = attnclust_service::ServiceConfig {
        ttl: Duration::from_secs(ttl_secs),
        ui_dir,
        ..Default::default()
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::data(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(SocketAddr::new(host, port))
            .await
            .map_err(|e| Failure::config(format!("cannot bind {host}:{port}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| Failure::data(e.to_string()))?;
        println!("listening on http://{addr}");
        attnclust_service::serve_listener(listener, config)
            .await
            .map_err(|e| Failure::data(e.to_string()))
    })
}

fn synth_blobs(a: SynthBlobs) -> Result<(), Failure> {
    if a.k == 0 || a.n < a.k || a.dim < 2 {
        return Err(Failure::config("need n >= k >= 1 and dim >= 2"));
    }
    let data = gaussian_blobs(a.n, a.k, a.dim, a.separation, a.sigma, a.seed);
    std::fs::create_dir_all(&a.out_dir)
        .map_err(|e| Failure::data(format!("{}: {e}", a.out_dir.display())))?;
    let io = |e: attnclust_core::pipeline::DataError| Failure::data(e.to_string());
    write_features(&a.out_dir.join("features.dtcf"), &data.features).map_err(io)?;
    write_file(&a.out_dir.join("labels.txt"), format_labels(&data.labels))?;
    if let Some(sigma) = a.jitter_sigma {
        let t = jitter_features(&data.features, sigma, a.seed.wrapping_add(1))
            .map_err(|e| Failure::config(e.to_string()))?;
        write_features(&a.out_dir.join("transformed.dtcf"), &t).map_err(io)?;
    }
    Ok(())
}

fn synth_scene(out_dir: PathBuf, seed: u64) -> Result<(), Failure> {
    let s = two_color_image(seed);
    write_file(&out_dir.join("image.ppm"), s.image.to_ppm())?;
    write_file(&out_dir.join("truth.pgm"), s.truth.to_pgm())?;
    let b = s.bbox;
    write_file(&out_dir.join("bbox.txt"), format!("{},{},{},{}\n", b.x, b.y, b.w, b.h))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, overrides } => run(config, overrides),
        Command::Grabcut {
            image,
            bbox,
            strokes,
            out,
            masked_out,
            opts,
        } => grabcut(image, bbox, strokes, out, masked_out, opts),
        Command::GrabcutBatch {
            manifest,
            out_dir,
            opts,
        } => batch::grabcut_batch(&manifest, &out_dir, &opts.params(), opts.iters, opts.seed, opts.fill),
        Command::Eval {
            pred,
            truth,
            arithmetic_nmi,
        } => eval(pred, truth, arithmetic_nmi),
        Command::Serve {
            port,
            host,
            ui_dir,
            ttl_secs,
        } => serve(host, port, ui_dir, ttl_secs),
        Command::SynthBlobs(a) => synth_blobs(a),
        Command::SynthScene { out_dir, seed } => synth_scene(out_dir, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
