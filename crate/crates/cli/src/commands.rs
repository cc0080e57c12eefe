use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use lcodec::bitstream::{bandwidth_bps, pack, unpack, StreamHeader, TokenStream};
use lcodec::dsp::AudioBuffer;
use lcodec::losses::mel_loss;
use lcodec::metrics::{snr_db, spectral_convergence};
use lcodec::nets::{codec_manifest, Decoder, Encoder, WeightsBundle, ENCODER_SAMPLE_RATE};
use lcodec::quantizer::{
    channel_information_profile, mcrvq_decode, mcrvq_encode, quantizer_loss, read_codebooks, token_entropy_bits,
    train_codebooks, train_rvq_codebooks, write_codebooks, ChannelProfile, CodebookSet, LatentSequence, McrvqConfig,
};
use lcodec::synth::{gaussian_clusters, CorrelatedGaussian};
use lcodec::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::audio::{read_wav, resample, write_wav};
use crate::config::RunConfig;

/// Name of the tensor holding a latent corpus inside an LCWT file.
pub const LATENTS_TENSOR: &str = "latents";

/// Ordered key/value report, printed as `key=value` lines.
#[derive(Debug, Default)]
pub struct Report(Vec<(String, serde_json::Value)>);

impl Report {
    pub fn add(&mut self, key: impl Into<String>, value: impl Into<serde_json::Value>) {
        self.0.push((key.into(), value.into()));
    }

    pub fn print(&self) {
        let mut out = std::io::stdout().lock();
        for (k, v) in &self.0 {
            let _ = match v {
                serde_json::Value::String(s) => writeln!(out, "{k}={s}"),
                other => writeln!(out, "{k}={other}"),
            };
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let map: serde_json::Map<String, serde_json::Value> = self.0.iter().cloned().collect();
        let text = serde_json::to_string_pretty(&map).map_err(|e| Error::Data(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// Non-finite numbers are reported as JSON strings.
fn num(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v).map_or_else(|| serde_json::Value::String(v.to_string()), Into::into)
}

pub fn load_weights(path: &Path) -> Result<WeightsBundle> {
    WeightsBundle::read(BufReader::new(File::open(path)?))
}

pub fn load_codebooks(path: &Path) -> Result<CodebookSet> {
    read_codebooks(BufReader::new(File::open(path)?))
}

fn save_codebooks(path: &Path, cbs: &CodebookSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_codebooks(&mut w, cbs)?;
    w.flush()?;
    Ok(())
}

pub fn read_latents(path: &Path) -> Result<LatentSequence> {
    let bundle = load_weights(path)?;
    let t = bundle
        .get(LATENTS_TENSOR)
        .ok_or_else(|| Error::Format(format!("{}: no `{LATENTS_TENSOR}` tensor", path.display())))?;
    let [frames, dim] = t.shape() else {
        return Err(Error::Format(format!("{}: latents must be 2-D", path.display())));
    };
    LatentSequence::from_rows(*frames, *dim, t.data().to_vec())
}

pub fn write_latents(path: &Path, z: &LatentSequence) -> Result<()> {
    let mut b = WeightsBundle::new();
    b.insert(LATENTS_TENSOR, z.as_array().clone());
    let mut w = BufWriter::new(File::create(path)?);
    b.write(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Recovers the stage layout from the codebooks themselves: leading stages
/// narrower than the full width are the parallel ones.
pub fn config_from_codebooks(cbs: &CodebookSet, dim: usize) -> Result<McrvqConfig> {
    if cbs.is_empty() {
        return Err(Error::Format("empty codebook set".into()));
    }
    let k = cbs.stage(0).size();
    let n_parallel = if cbs.stage(0).dim() == dim {
        1
    } else {
        cbs.iter().take_while(|c| c.dim() < dim).count()
    };
    let mut partition = Vec::with_capacity(n_parallel);
    let mut start = 0;
    for cb in cbs.iter().take(n_parallel) {
        partition.push(start..start + cb.dim());
        start += cb.dim();
    }
    let cfg = McrvqConfig::with_partition(cbs.len(), k, dim, partition)
        .map_err(|e| Error::Format(format!("codebooks do not form a valid layout for dim {dim}: {e}")))?;
    cfg.check_codebooks(cbs)?;
    Ok(cfg)
}

fn to_24k(audio: AudioBuffer) -> Result<AudioBuffer> {
    if audio.sample_rate() == ENCODER_SAMPLE_RATE {
        return Ok(audio);
    }
    log::info!("resampling {} Hz -> {ENCODER_SAMPLE_RATE} Hz", audio.sample_rate());
    resample(&audio, ENCODER_SAMPLE_RATE)
}

pub fn manifest(cfg: &RunConfig, init_random: Option<&Path>) -> Result<()> {
    cfg.validate()?;
    let m = codec_manifest(&cfg.encoder(), &cfg.decoder());
    let mut out = std::io::stdout().lock();
    let mut total = 0usize;
    for p in &m {
        let n: usize = p.shape.iter().product();
        total += n;
        let dims: Vec<String> = p.shape.iter().map(usize::to_string).collect();
        writeln!(out, "{}\t{}", p.name, dims.join("x"))?;
    }
    writeln!(out, "# {} tensors, {} parameters", m.len(), total)?;
    if let Some(path) = init_random {
        let b = WeightsBundle::random(&m, cfg.seed);
        let mut w = BufWriter::new(File::create(path)?);
        b.write(&mut w)?;
        w.flush()?;
        log::info!("wrote random weights to {}", path.display());
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CorpusKind {
    /// Low-rank correlated Gaussian frames.
    Correlated,
    /// Isotropic Gaussian clusters around random means.
    Clusters,
}

pub fn synth_corpus(cfg: &RunConfig, out: &Path, frames: usize, kind: CorpusKind, clusters: usize) -> Result<()> {
    let dim = cfg.quantizer.dim;
    let z = match kind {
        CorpusKind::Correlated => CorrelatedGaussian::new(frames, dim, cfg.seed).generate()?,
        CorpusKind::Clusters => {
            if clusters == 0 {
                return Err(Error::Config("need at least one cluster".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let means: Vec<Vec<f32>> = (0..clusters)
                .map(|_| (0..dim).map(|_| rng.random_range(-5.0f32..5.0)).collect())
                .collect();
            gaussian_clusters(&means, frames.div_ceil(clusters), 0.1, cfg.seed.wrapping_add(1))?
        }
    };
    write_latents(out, &z)?;
    let mut r = Report::default();
    r.add("frames", z.frames());
    r.add("dim", z.dim());
    r.add("mean_energy", num(z.energy() / z.frames().max(1) as f64));
    r.print();
    Ok(())
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    Ok(files)
}

/// Encodes every WAV in `dir` (in parallel) and stacks the latents in
/// filename order.
pub fn latents_from_wavs(cfg: &RunConfig, dir: &Path, weights: &Path) -> Result<LatentSequence> {
    let files = wav_files(dir)?;
    if files.is_empty() {
        return Err(Error::Data(format!("{}: no WAV files", dir.display())));
    }
    let w = load_weights(weights)?;
    let enc = Encoder::from_bundle(&w, &cfg.encoder())?;
    let parts: Vec<LatentSequence> = files
        .par_iter()
        .map(|p| enc.forward(&to_24k(read_wav(p)?)?))
        .collect::<Result<_>>()?;
    let dim = cfg.quantizer.dim;
    let mut data = Vec::new();
    for z in &parts {
        data.extend(z.as_array().iter().copied());
    }
    LatentSequence::from_rows(data.len() / dim, dim, data)
}

pub struct TrainArgs<'a> {
    pub out: &'a Path,
    pub latents: Option<&'a Path>,
    pub wav_dir: Option<&'a Path>,
    pub rvq_out: Option<&'a Path>,
    pub report: Option<&'a Path>,
}

pub fn train(cfg: &RunConfig, args: &TrainArgs<'_>) -> Result<()> {
    let mcfg = cfg.mcrvq()?;
    let z = match (args.latents, args.wav_dir) {
        (Some(p), None) => read_latents(p)?,
        (None, Some(dir)) => {
            let weights = RunConfig::require(&cfg.paths.weights, "weights")?;
            latents_from_wavs(cfg, dir, weights)?
        }
        _ => return Err(Error::Config("give exactly one of --latents or --wav-dir".into())),
    };
    if z.frames() == 0 {
        return Err(Error::Data("empty corpus".into()));
    }
    let schedule = cfg.schedule();
    let cbs = train_codebooks(&z, &mcfg, &schedule)?;
    save_codebooks(args.out, &cbs)?;
    let res = mcrvq_encode(&z, &cbs, &mcfg)?;

    let mut r = Report::default();
    r.add("frames", z.frames());
    r.add("dim", z.dim());
    r.add("n_total", mcfg.n_total());
    r.add("n_parallel", mcfg.n_parallel());
    r.add("codebook_size", mcfg.codebook_size());
    let e = &res.stage_residual_energy;
    r.add("input_energy", num(e[0]));
    for s in 0..mcfg.n_total() {
        let h = token_entropy_bits(&res.tokens.stage_column(s), mcfg.codebook_size());
        r.add(format!("stage{s}_entropy_bits"), num(h));
        r.add(format!("stage{s}_residual_energy"), num(e[s + 1]));
    }
    let last = *e.last().unwrap();
    r.add("final_residual_energy", num(last));
    r.add("residual_fraction", num(if e[0] > 0.0 { last / e[0] } else { 0.0 }));

    if let Some(path) = args.rvq_out {
        let rvq = train_rvq_codebooks(&z, mcfg.n_total(), mcfg.codebook_size(), &schedule)?;
        save_codebooks(path, &rvq)?;
        r.add("rvq_codebooks", path.display().to_string());
    }
    r.print();
    if let Some(p) = args.report {
        r.write_json(p)?;
    }
    Ok(())
}

pub fn encode(cfg: &RunConfig, input: &Path, output: &Path) -> Result<()> {
    let weights = load_weights(RunConfig::require(&cfg.paths.weights, "weights")?)?;
    let cbs = load_codebooks(RunConfig::require(&cfg.paths.codebooks, "codebooks")?)?;
    let mcfg = config_from_codebooks(&cbs, cfg.quantizer.dim)?;
    let enc = Encoder::from_bundle(&weights, &cfg.encoder())?;
    let audio = to_24k(read_wav(input)?)?;
    let z = enc.forward(&audio)?;
    let res = mcrvq_encode(&z, &cbs, &mcfg)?;
    let header = StreamHeader {
        sample_rate: ENCODER_SAMPLE_RATE,
        hop: cfg.encoder().hop() as u32,
        n_total: mcfg.n_total() as u16,
        n_parallel: mcfg.n_parallel() as u16,
        codebook_size: mcfg.codebook_size() as u32,
        frame_count: res.tokens.frames() as u32,
    };
    let bytes = pack(&TokenStream::new(header, res.tokens)?)?;
    std::fs::write(output, &bytes)?;
    let mut r = Report::default();
    r.add("frames", header.frame_count);
    r.add("bytes", bytes.len());
    r.add("bandwidth_bps", num(bandwidth_bps(&header)));
    r.print();
    Ok(())
}

pub fn decode(cfg: &RunConfig, input: &Path, output: &Path, stages: Option<usize>) -> Result<()> {
    let ts = unpack(&std::fs::read(input)?)?;
    let cbs = load_codebooks(RunConfig::require(&cfg.paths.codebooks, "codebooks")?)?;
    let mcfg = config_from_codebooks(&cbs, cfg.quantizer.dim)?;
    let h = ts.header;
    if (h.n_total as usize, h.n_parallel as usize, h.codebook_size as usize)
        != (mcfg.n_total(), mcfg.n_parallel(), mcfg.codebook_size())
    {
        return Err(Error::Format(format!(
            "stream layout ({} stages, {} parallel, {} entries) does not match the codebooks",
            h.n_total, h.n_parallel, h.codebook_size
        )));
    }
    let stft = cfg.stft()?;
    if h.sample_rate != ENCODER_SAMPLE_RATE || h.hop as usize != stft.hop() {
        return Err(Error::Config(format!(
            "stream is {} Hz / hop {}, decoder runs at {ENCODER_SAMPLE_RATE} Hz / hop {}",
            h.sample_rate,
            h.hop,
            stft.hop()
        )));
    }
    let n = stages.unwrap_or(mcfg.n_total());
    if n > mcfg.n_total() {
        return Err(Error::Config(format!("--stages {n} exceeds the {} stages in the stream", mcfg.n_total())));
    }
    let zq = mcrvq_decode(&ts.tokens, &cbs, &mcfg, n)?;
    let weights = load_weights(RunConfig::require(&cfg.paths.weights, "weights")?)?;
    let dec = Decoder::from_bundle(&weights, &cfg.decoder())?;
    let audio = dec.forward(&zq, &stft)?;
    write_wav(output, &audio)?;
    let mut r = Report::default();
    r.add("frames", h.frame_count);
    r.add("stages", n);
    r.add("samples", audio.len());
    r.add("peak", num(audio.peak()));
    r.print();
    Ok(())
}

pub fn eval(cfg: &RunConfig, reference: &Path, degraded: &Path, latents: Option<&Path>, json: Option<&Path>) -> Result<()> {
    let a = read_wav(reference)?;
    let b = read_wav(degraded)?;
    let stft = cfg.stft()?;
    let mut r = Report::default();
    r.add("samples", a.len());
    r.add("mel_loss", num(mel_loss(&a, &b, &stft, &cfg.mel())?));
    r.add("snr_db", num(snr_db(&a, &b)?));
    r.add("spectral_convergence", num(spectral_convergence(&a, &b, &stft)?));
    if let Some(p) = latents {
        let z = read_latents(p)?;
        let cbs = load_codebooks(RunConfig::require(&cfg.paths.codebooks, "codebooks")?)?;
        let mcfg = config_from_codebooks(&cbs, z.dim())?;
        let res = mcrvq_encode(&z, &cbs, &mcfg)?;
        r.add("quantizer_loss", num(quantizer_loss(&res, &z, &cbs, &mcfg)?));
    }
    r.print();
    if let Some(p) = json {
        r.write_json(p)?;
    }
    Ok(())
}

/// CSV rows of a channel profile. Per scheme: one `stage` row for each of
/// the first `n_parallel` stages, then one `prefix` row for each decodable
/// prefix length `n_parallel..=n_total`. Plain RVQ uses the same indices so
/// the two schemes line up row for row.
pub fn profile_csv(p: &ChannelProfile) -> String {
    let mut s = String::from("scheme,kind,index,captured_fraction,entropy_bits,zero_energy\n");
    let z = u8::from(p.zero_energy);
    for (name, sp) in [("mcrvq", &p.mcrvq), ("rvq", &p.rvq)] {
        for i in 0..p.n_parallel {
            s += &format!("{name},stage,{},{},{},{z}\n", i + 1, sp.stage_captured[i], sp.stage_entropy_bits[i]);
        }
        for m in p.n_parallel..=p.n_total {
            let frac = sp.prefix_captured.iter().find(|(k, _)| *k == m).map_or(0.0, |(_, f)| *f);
            s += &format!("{name},prefix,{m},{frac},{},{z}\n", sp.stage_entropy_bits[m - 1]);
        }
    }
    s
}

pub fn profile(cfg: &RunConfig, latents: &Path, csv: Option<&Path>) -> Result<()> {
    let z = read_latents(latents)?;
    let schedule = cfg.schedule();
    let (mcbs, mcfg) = match &cfg.paths.codebooks {
        Some(p) => {
            let cbs = load_codebooks(p)?;
            let c = config_from_codebooks(&cbs, z.dim())?;
            (cbs, c)
        }
        None => {
            let c = McrvqConfig::new(cfg.quantizer.n_total, cfg.quantizer.n_parallel, cfg.quantizer.codebook_size, z.dim())?;
            (train_codebooks(&z, &c, &schedule)?, c)
        }
    };
    let rcbs = match &cfg.paths.rvq_codebooks {
        Some(p) => load_codebooks(p)?,
        None => train_rvq_codebooks(&z, mcfg.n_total(), mcfg.codebook_size(), &schedule)?,
    };
    let p = channel_information_profile(&z, &mcbs, &mcfg, &rcbs)?;

    let mut r = Report::default();
    r.add("frames", z.frames());
    r.add("zero_energy", p.zero_energy);
    for (name, sp) in [("mcrvq", &p.mcrvq), ("rvq", &p.rvq)] {
        for (i, f) in sp.stage_captured.iter().enumerate() {
            r.add(format!("{name}.stage{}.captured", i + 1), num(*f));
        }
        for (m, f) in &sp.prefix_captured {
            r.add(format!("{name}.prefix{m}.captured"), num(*f));
        }
        for (i, h) in sp.stage_entropy_bits.iter().enumerate() {
            r.add(format!("{name}.stage{}.entropy_bits", i + 1), num(*h));
        }
    }
    r.print();
    print_side_by_side(&p);
    if let Some(path) = csv {
        std::fs::write(path, profile_csv(&p))?;
    }
    Ok(())
}

fn print_side_by_side(p: &ChannelProfile) {
    let rows: BTreeMap<usize, (Option<f64>, Option<f64>)> = p
        .mcrvq
        .prefix_captured
        .iter()
        .map(|&(m, f)| (m, (Some(f), None)))
        .chain(p.rvq.prefix_captured.iter().map(|&(m, f)| (m, (None, Some(f)))))
        .fold(BTreeMap::new(), |mut acc, (m, (a, b))| {
            let e = acc.entry(m).or_insert((None, None));
            e.0 = e.0.or(a);
            e.1 = e.1.or(b);
            acc
        });
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |f| format!("{f:.4}"));
    eprintln!("{:>7}  {:>8}  {:>8}", "stages", "mcrvq", "rvq");
    for (m, (a, b)) in rows {
        eprintln!("{m:>7}  {:>8}  {:>8}", cell(a), cell(b));
    }
}
