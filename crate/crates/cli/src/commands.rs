use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gobo::container::{self, decode, encode, measure_compression, ContainerView};
use gobo::fixtures;
use gobo::kernel::{centroid_sum_matvec, count_ops, max_relative_error, reference_matvec};
use gobo::quant::{dequantize, reconstruction_bound};
use gobo::tilesim::{
    plan_dataflow_with, simulate_chip, simulate_tile, Dataflow, ScheduledLayer, TileConfig, TileTrace,
};
use gobo::{ActivationVector, ContainerGeometry, QuantConfig, QuantizedLayer, WeightMatrix};

use crate::error::{code, Failure};
use crate::manifest::{default_path, sha256_hex, InputRecord, RunConfig, RunManifest};
use crate::{BenchMode, Cli, Command};

const KERNEL_TOLERANCE: f64 = 1e-5;
const USAGE: u8 = 2;

struct Outcome {
    report: String,
    inputs: Vec<InputRecord>,
    config: RunConfig,
    output: Option<(PathBuf, String)>,
}

impl Outcome {
    fn new(report: String, inputs: Vec<InputRecord>, config: RunConfig) -> Self {
        Self { report, inputs, config, output: None }
    }
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let start = Instant::now();
    let seed = cli.seed;
    let (name, outcome) = match cli.command {
        Command::Quantize { input, bits, threshold, method, out, layout, sm_size, alignment } => {
            let cfg = QuantConfig::new(method, bits).with_threshold(threshold);
            ("quantize", quantize(&input, &cfg, &out, layout, sm_size, alignment, seed)?)
        }
        Command::Verify { container, original, words } => ("verify", verify(&container, &original, words, seed)?),
        Command::Bench { container, words, mode, tiles, group_cols } => {
            ("bench", bench(&container, words, mode, tiles, group_cols, seed)?)
        }
        Command::SweepSm { input, bits, threshold, method, sm_sizes } => {
            let cfg = QuantConfig::new(method, bits).with_threshold(threshold);
            ("sweep-sm", sweep_sm(&input, &cfg, &sm_sizes, seed)?)
        }
        Command::Dump { container } => ("dump", dump(&container, seed)?),
        Command::GenFixture { out, rows, cols, sigma, truncate, outliers, outlier_min, outlier_max } => (
            "gen-fixture",
            gen_fixture(&out, rows, cols, sigma, truncate, outliers, (outlier_min, outlier_max), seed)?,
        ),
    };
    print!("{}", outcome.report);

    let manifest_path = cli.manifest.or_else(|| outcome.output.as_ref().map(|(p, _)| default_path(p)));
    if let Some(path) = manifest_path {
        let (output_path, output_sha256) = match outcome.output {
            Some((p, digest)) => (Some(p), digest),
            None => (None, sha256_hex(outcome.report.as_bytes())),
        };
        RunManifest {
            command: name.to_string(),
            inputs: outcome.inputs,
            config: outcome.config,
            tool_version: env!("CARGO_PKG_VERSION"),
            elapsed_ms: start.elapsed().as_millis(),
            output_path,
            output_sha256,
        }
        .write(&path)?;
    }
    Ok(())
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure::io(path, e))
}

fn read_matrix(path: &Path) -> Result<(WeightMatrix, InputRecord), Failure> {
    let bytes = read(path)?;
    let m = WeightMatrix::from_fwt_bytes(&bytes).map_err(|e| Failure::from(e).at(path))?;
    Ok((m, InputRecord::new(path, &bytes)))
}

fn read_container(path: &Path) -> Result<(Vec<u8>, QuantizedLayer, InputRecord), Failure> {
    let bytes = read(path)?;
    let layer = decode(&bytes).map_err(|e| Failure::from(e).at(path))?;
    let record = InputRecord::new(path, &bytes);
    Ok((bytes, layer, record))
}

fn geometry(sm_size: usize, alignment: usize) -> Result<ContainerGeometry, Failure> {
    ContainerGeometry::with_sm_weights(sm_size, alignment).map_err(|e| Failure::new(USAGE, e.to_string()))
}

fn activations(cols: usize, words: usize, seed: u64) -> Vec<ActivationVector> {
    (0..words)
        .map(|i| ActivationVector::new(fixtures::uniform_activations(cols, seed.wrapping_add(i as u64))).unwrap())
        .collect()
}

fn quantize(
    input: &Path,
    cfg: &QuantConfig,
    out: &Path,
    layout: gobo::Layout,
    sm_size: usize,
    alignment: usize,
    seed: u64,
) -> Result<Outcome, Failure> {
    let geometry = geometry(sm_size, alignment)?;
    let (m, record) = read_matrix(input)?;
    let layer = gobo::quantize(&m, cfg).map_err(|e| Failure::from(e).at(input))?;
    let bytes = encode(&layer, &geometry, layout)?;
    write(out, &bytes)?;

    let c = &layer.convergence;
    let n = m.len() as f64;
    let max_abs_error = m
        .as_slice()
        .iter()
        .zip(dequantize(&layer).as_slice())
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .fold(0.0, f64::max);
    let mut r = String::new();
    let _ = writeln!(r, "method={}\nbits={}\nrows={}\ncols={}", cfg.method, cfg.bits, m.rows(), m.cols());
    let _ = writeln!(r, "iterations={}\ncap_hit={}", c.iterations, c.cap_hit);
    let _ = writeln!(r, "initial_l1={:.6}\nfinal_l1={:.6}", c.initial_l1, c.final_l1);
    let _ = writeln!(r, "exact={}\nmax_abs_error={max_abs_error:e}", max_abs_error == 0.0);
    let _ = writeln!(r, "outliers={}\noutlier_fraction={:.6}", layer.outliers.len(), layer.outliers.len() as f64 / n);
    let _ = writeln!(r, "empty_cluster_events={}", c.empty_cluster_events);
    let _ = writeln!(r, "reassignment_share_first_15pct={:.4}", c.early_reassignment_share(0.15));
    let _ = writeln!(r, "layout={layout}\nsm_size={sm_size}\ncontainer_bytes={}", bytes.len());
    let _ = writeln!(r, "bits_per_weight={:.4}", bytes.len() as f64 * 8.0 / n);
    let _ = writeln!(r, "compression_ratio={:.4}", 32.0 * n / (bytes.len() as f64 * 8.0));
    let _ = writeln!(r, "ratio_bound={:.4}", 32.0 / cfg.bits as f64);
    let _ = writeln!(r, "output={}", out.display());

    let config = RunConfig {
        method: Some(cfg.method.to_string()),
        bits: Some(cfg.bits),
        threshold: Some(cfg.threshold),
        sm_size: Some(sm_size),
        layout: Some(layout.to_string()),
        seed,
    };
    let mut outcome = Outcome::new(r, vec![record], config);
    outcome.output = Some((out.to_path_buf(), sha256_hex(&bytes)));
    Ok(outcome)
}

/// One named check: `Ok(detail)` passes, `Err(detail)` fails.
type Check = Result<String, String>;

fn verify(container_path: &Path, original: &Path, words: usize, seed: u64) -> Result<Outcome, Failure> {
    let bytes = read(container_path)?;
    let (m, original_record) = read_matrix(original)?;
    let inputs = vec![InputRecord::new(container_path, &bytes), original_record];
    let config = RunConfig { seed, ..RunConfig::default() };

    let mut report = String::new();
    let mut record = |name: &str, check: Check| -> Result<(), Failure> {
        match check {
            Ok(detail) => {
                let _ = writeln!(report, "check={name} status=pass {detail}");
                Ok(())
            }
            Err(detail) => {
                let _ = writeln!(report, "check={name} status=fail {detail}");
                let _ = writeln!(report, "verify=fail");
                print!("{report}");
                Err(Failure::new(code::VERIFY_FAILED, format!("verification failed at {name}: {detail}")))
            }
        }
    };

    let parsed = ContainerView::parse(&bytes).and_then(|v| Ok((v.header().clone(), decode(&bytes)?)));
    let (header, layer) = match parsed {
        Ok(p) => p,
        Err(e) => {
            record("decode", Err(e.to_string()))?;
            unreachable!()
        }
    };
    record("decode", Ok(format!("bits={} outliers={}", layer.bits(), layer.outliers.len())))?;

    record(
        "dimensions",
        if (layer.rows, layer.cols) == (m.rows(), m.cols()) {
            Ok(format!("shape={}x{}", m.rows(), m.cols()))
        } else {
            Err(format!("container {}x{} vs original {}x{}", layer.rows, layer.cols, m.rows(), m.cols()))
        },
    )?;

    let reencoded = encode(&layer, &header.geometry, header.layout);
    record(
        "round_trip",
        match reencoded {
            Ok(b) if b == bytes => Ok(format!("bytes={}", b.len())),
            Ok(_) => Err("re-encoding the decoded layer changes the bytes".into()),
            Err(e) => Err(e.to_string()),
        },
    )?;

    let mismatch = layer.outliers.entries.iter().find(|o| o.value.to_bits() != m.get(o.row, o.col).to_bits());
    record(
        "outliers",
        match mismatch {
            None => Ok(format!("exact={}", layer.outliers.len())),
            Some(o) => Err(format!("({}, {}) stores {} but the original holds {}", o.row, o.col, o.value, m.get(o.row, o.col))),
        },
    )?;

    let mask = layer.outlier_mask();
    let g = m.as_slice().iter().zip(&mask).filter(|(_, o)| !**o).map(|(&w, _)| w);
    let (lo, hi) = g.fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), w| (lo.min(w), hi.max(w)));
    let bound = if lo <= hi { reconstruction_bound(layer.centroids.values(), lo, hi) } else { 0.0 };
    let deq = dequantize(&layer);
    let worst = m
        .as_slice()
        .iter()
        .zip(deq.as_slice())
        .zip(&mask)
        .filter(|(_, o)| !**o)
        .map(|((&a, &b), _)| (a as f64 - b as f64).abs())
        .fold(0.0, f64::max);
    record(
        "reconstruction",
        if worst <= bound * (1.0 + 1e-9) {
            Ok(format!("max_error={worst:e} bound={bound:e}"))
        } else {
            Err(format!("max_error={worst:e} exceeds bound={bound:e}"))
        },
    )?;

    let mut err = 0.0f64;
    for a in activations(layer.cols, words, seed) {
        let got: Vec<f64> = centroid_sum_matvec(&layer, &a)?.into_iter().map(f64::from).collect();
        err = err.max(max_relative_error(&got, &reference_matvec(&deq, &a)?));
    }
    record(
        "kernel",
        if err <= KERNEL_TOLERANCE {
            Ok(format!("words={words} max_rel_error={err:e}"))
        } else {
            Err(format!("max_rel_error={err:e} exceeds {KERNEL_TOLERANCE:e}"))
        },
    )?;
    let _ = writeln!(report, "verify=pass");
    Ok(Outcome::new(report, inputs, config))
}

fn bench(path: &Path, words: usize, mode: BenchMode, tiles: usize, group_cols: usize, seed: u64) -> Result<Outcome, Failure> {
    if words == 0 {
        return Err(Failure::new(USAGE, "--words must be at least 1"));
    }
    let (bytes, layer, record) = read_container(path)?;
    let acts = activations(layer.cols, words, seed);
    let bits = layer.bits();
    let mut r = String::new();
    let _ = writeln!(r, "rows={}\ncols={}\nbits={}\noutliers={}\nwords={words}", layer.rows, layer.cols, bits, layer.outliers.len());

    let start = Instant::now();
    let kernel_out = acts.iter().map(|a| centroid_sum_matvec(&layer, a)).collect::<Result<Vec<_>, _>>()?;
    let kernel_s = start.elapsed().as_secs_f64();

    match mode {
        BenchMode::Kernel => {
            let deq = dequantize(&layer);
            let start = Instant::now();
            let reference = acts.iter().map(|a| reference_matvec(&deq, a)).collect::<Result<Vec<_>, _>>()?;
            let reference_s = start.elapsed().as_secs_f64();
            let err = kernel_out
                .iter()
                .zip(&reference)
                .map(|(k, w)| max_relative_error(&k.iter().map(|&v| v as f64).collect::<Vec<_>>(), w))
                .fold(0.0, f64::max);
            let ops = count_ops(&layer);
            let _ = writeln!(r, "macs={}\ndense_macs={}", ops.total.macs, ops.dense_macs);
            let _ = writeln!(r, "accumulations={}\nlookups={}", ops.total.accumulations, ops.total.lookups);
            let _ = writeln!(r, "mac_reduction={:.4}", ops.dense_macs as f64 / ops.total.macs as f64);
            let _ = writeln!(r, "row_mac_reduction_excluding_outliers={:.4}", layer.cols as f64 / (1u64 << bits) as f64);
            let _ = writeln!(r, "max_rel_error_vs_reference={err:e}");
            let _ = writeln!(r, "kernel_seconds={kernel_s:.6}\nreference_seconds={reference_s:.6}");
            let _ = writeln!(r, "words_per_second={:.2}", words as f64 / kernel_s.max(1e-9));
        }
        BenchMode::Tile | BenchMode::Chip => {
            let per_unit = if bits == 4 { TileConfig::paired() } else { TileConfig::single() };
            let cfg = match mode {
                BenchMode::Chip => per_unit.with_tiles(tiles),
                _ => per_unit,
            };
            let dataflow = if group_cols == 0 { Dataflow::OutputStationary } else { Dataflow::Blocked { group_cols } };
            let scheduled = schedule(bytes, &layer, words, &cfg, dataflow)?;
            let trace: TileTrace = if mode == BenchMode::Tile {
                simulate_tile(&scheduled, &acts, &cfg)?
            } else {
                let chip = simulate_chip(&[scheduled], std::slice::from_ref(&acts), &cfg)?;
                chip.layers.into_iter().next().expect("one layer")
            };
            let err = trace
                .outputs
                .iter()
                .zip(&kernel_out)
                .map(|(t, k)| {
                    let t: Vec<f64> = t.iter().map(|&v| v as f64).collect();
                    max_relative_error(&t, &k.iter().map(|&v| v as f64).collect::<Vec<_>>())
                })
                .fold(0.0, f64::max);
            let _ = writeln!(r, "tiles={}\npes={}", cfg.tiles, trace.pes);
            r.push_str(&trace.summary());
            let _ = writeln!(r, "cycles_per_word={:.2}", trace.total_cycles as f64 / words as f64);
            let _ = writeln!(r, "weight_fetch_bits_per_word={:.2}", trace.weight_fetch_bits as f64 / words as f64);
            let _ = writeln!(r, "kernel_max_rel_error={err:e}\nkernel_agreement={}", err <= KERNEL_TOLERANCE);
        }
    }
    Ok(Outcome::new(r, vec![record], RunConfig { bits: Some(bits), seed, ..RunConfig::default() }))
}

/// The tile reads 16x16 submatrices; other geometries are re-encoded.
fn schedule(
    bytes: Vec<u8>,
    layer: &QuantizedLayer,
    words: usize,
    cfg: &TileConfig,
    dataflow: Dataflow,
) -> Result<ScheduledLayer, Failure> {
    let side = ContainerView::parse(&bytes)?.header().geometry.sm_side();
    if side != container::BLOCK_SIZE {
        return Ok(ScheduledLayer::from_layer_with(layer, words, cfg, dataflow)?);
    }
    let plan = plan_dataflow_with(layer.rows, layer.cols, layer.bits(), words, cfg, dataflow)?;
    Ok(ScheduledLayer::new(bytes, plan)?)
}

fn sweep_sm(input: &Path, cfg: &QuantConfig, sizes: &[usize], seed: u64) -> Result<Outcome, Failure> {
    let geometries = sizes.iter().map(|&s| geometry(s, 64)).collect::<Result<Vec<_>, _>>()?;
    let (m, record) = read_matrix(input)?;
    let layer = gobo::quantize(&m, cfg).map_err(|e| Failure::from(e).at(input))?;
    let mut r = String::new();
    let _ = writeln!(r, "method={}\nbits={}\noutliers={}", cfg.method, cfg.bits, layer.outliers.len());
    for (size, g) in sizes.iter().zip(&geometries) {
        let c = measure_compression(&layer, g)?;
        let _ = writeln!(
            r,
            "sm_size={size} ratio={:.4} bound={:.4} bits_per_weight={:.4} outlier_bytes={}",
            c.ratio_vs_fp32, c.no_outlier_bound, c.bits_per_weight, c.outlier_bytes
        );
    }
    let config = RunConfig {
        method: Some(cfg.method.to_string()),
        bits: Some(cfg.bits),
        threshold: Some(cfg.threshold),
        seed,
        ..RunConfig::default()
    };
    Ok(Outcome::new(r, vec![record], config))
}

fn dump(path: &Path, seed: u64) -> Result<Outcome, Failure> {
    let bytes = read(path)?;
    let text = container::dump(&bytes).map_err(|e| Failure::from(e).at(path))?;
    Ok(Outcome::new(text, vec![InputRecord::new(path, &bytes)], RunConfig { seed, ..RunConfig::default() }))
}

#[allow(clippy::too_many_arguments)]
fn gen_fixture(
    out: &Path,
    rows: usize,
    cols: usize,
    sigma: f32,
    truncate: f64,
    outliers: usize,
    (min_mag, max_mag): (f32, f32),
    seed: u64,
) -> Result<Outcome, Failure> {
    if rows == 0 || cols == 0 || outliers > rows * cols {
        return Err(Failure::new(USAGE, format!("cannot plant {outliers} outliers in a {rows}x{cols} matrix")));
    }
    if !(sigma > 0.0 && truncate > 0.0 && min_mag <= max_mag) {
        return Err(Failure::new(USAGE, "need sigma > 0, truncate > 0 and outlier-min <= outlier-max"));
    }
    let base = fixtures::truncated_gaussian_matrix(rows, cols, sigma, truncate, seed);
    let (m, _) = fixtures::plant_outliers(&base, outliers, min_mag, max_mag, seed);
    let bytes = m.to_fwt_bytes();
    write(out, &bytes)?;
    let digest = sha256_hex(&bytes);
    let mut r = String::new();
    let _ = writeln!(r, "rows={rows}\ncols={cols}\nsigma={sigma}\nplanted_outliers={outliers}\nseed={seed}");
    let _ = writeln!(r, "sha256={digest}\noutput={}", out.display());
    let mut outcome = Outcome::new(r, Vec::new(), RunConfig { seed, ..RunConfig::default() });
    outcome.output = Some((out.to_path_buf(), digest));
    Ok(outcome)
}
