//! Point-target, CFAR and STFT checks.

use std::f64::consts::PI;

use gaitsada_core::dsp::{
    cfar_detect, doppler_map, range_fft, stft_magnitude, CfarConfig, PipelineConfig, SpectrogramPipeline, StftConfig, WindowFn,
};
use gaitsada_core::sim::{simulate_walk, Direction, DomainEnv, GaitProfile, RadarConfig, Walk, SPEED_OF_LIGHT};
use rand_distr::{Distribution, Exp1};
use rustfft::num_complex::Complex64;

const RANGE_BIN: usize = 20;
const DOPPLER_BIN: i64 = 3;

/// Fast-time bin of a range: `f_b / (fs / N)` written out from first principles.
fn expected_range_bin(cfg: &RadarConfig, range: f64) -> f64 {
    let slope = cfg.bandwidth_hz / cfg.chirp_duration_s;
    let beat = 2.0 * range * slope / SPEED_OF_LIGHT;
    let fs = cfg.samples_per_chirp as f64 / cfg.chirp_duration_s;
    beat / (fs / cfg.samples_per_chirp as f64)
}

/// Slow-time DFT bin (signed) of a radial velocity over `n` chirps.
fn expected_doppler_bin(cfg: &RadarConfig, velocity: f64, n: usize) -> f64 {
    let lambda = SPEED_OF_LIGHT / cfg.carrier_hz;
    let prf = cfg.frame_rate_hz * cfg.chirps_per_frame as f64;
    (2.0 * velocity / lambda) / (prf / n as f64)
}

fn point_target(direction: Direction) -> (RadarConfig, f64, f64, gaitsada_core::sim::BeatSignal) {
    let cfg = RadarConfig::default();
    let range = RANGE_BIN as f64 * SPEED_OF_LIGHT / (2.0 * cfg.bandwidth_hz);
    let lambda = SPEED_OF_LIGHT / cfg.carrier_hz;
    let prf = cfg.frame_rate_hz * cfg.chirps_per_frame as f64;
    let speed = DOPPLER_BIN as f64 * prf / cfg.chirps_per_frame as f64 * lambda / 2.0;
    let profile = GaitProfile {
        subject_id: 0,
        torso_speed: speed,
        cadence: 2.0,
        torso_reflectivity: 1.0,
        limbs: Vec::new(),
        height_scale: 1.0,
    };
    let walk = Walk {
        duration_s: 1.28,
        direction,
        start_range_m: range,
        gait_phase: 0.0,
        noise_seed: 0,
    };
    let sig = simulate_walk(&profile, &DomainEnv::anechoic("anechoic"), &cfg, &walk).unwrap();
    (cfg, range, speed, sig)
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap()
}

/// Exact range bin over time and exact Doppler row of frame 0, both directions.
pub fn point_target_bins() -> String {
    let mut frames_checked = 0;
    for (direction, sign) in [(Direction::Toward, 1.0), (Direction::Away, -1.0)] {
        let (cfg, range, speed, sig) = point_target(direction);
        let rp = range_fft(&sig);
        let chirps = cfg.chirps_per_frame;
        let frame_period = 1.0 / cfg.frame_rate_hz;

        // frames whose mid-frame range is well inside one bin
        let mut checked = 0;
        for frame in 0..sig.frames {
            let t = (frame as f64 + 0.5) * frame_period;
            let predicted = expected_range_bin(&cfg, range - sign * speed * t);
            if (predicted - predicted.round()).abs() > 0.3 {
                continue;
            }
            checked += 1;
            assert_eq!(argmax(&rp.frame_power(frame)), predicted.round() as usize, "frame {frame}");
        }
        assert!(checked > 20);

        let bin0 = expected_range_bin(&cfg, range);
        assert!((bin0 - RANGE_BIN as f64).abs() < 1e-9);
        let doppler = expected_doppler_bin(&cfg, sign * speed, chirps);
        assert!((doppler - sign * DOPPLER_BIN as f64).abs() < 1e-9);
        let map = doppler_map(rp.frame(0), chirps, rp.bins);
        let column: Vec<f64> = (0..chirps).map(|row| map[row * rp.bins + RANGE_BIN]).collect();
        let row = (chirps as i64 / 2 + doppler.round() as i64) as usize;
        assert_eq!(argmax(&column), row, "{direction:?}");
        frames_checked += checked;
    }
    format!("range bin {RANGE_BIN} and Doppler row +-{DOPPLER_BIN} exact in both directions ({frames_checked} frames)")
}

/// Detection, velocity and STFT row of the point target through the full pipeline.
pub fn pipeline_point_target() -> String {
    let (cfg, _, speed, sig) = point_target(Direction::Toward);
    let pipe = SpectrogramPipeline::new(PipelineConfig::default());
    let trace = pipe.run(&sig).unwrap();
    let first = &trace.detections[0];
    assert_eq!(first.len(), 1, "{first:?}");
    assert_eq!(first[0].bin, RANGE_BIN);
    assert!((first[0].velocity - speed).abs() < 1e-9);

    // the cropped STFT keeps DC at its middle row
    let window = pipe.config.stft.window_len;
    let offset = expected_doppler_bin(&cfg, speed, window);
    assert!((offset - offset.round()).abs() < 1e-9);
    let raw = &trace.raw;
    let row = raw.rows / 2 + offset.round() as usize;
    let peaks: Vec<usize> = (0..raw.cols)
        .map(|c| argmax(&(0..raw.rows).map(|r| raw.get(r, c) as f64).collect::<Vec<_>>()))
        .collect();
    // the gate hops between range bins while the target migrates, which can
    // smear single windows by one row
    assert!(peaks.iter().all(|&p| p.abs_diff(row) <= 1), "{peaks:?}");
    let exact = peaks.iter().filter(|&&p| p == row).count();
    assert!(exact * 10 >= raw.cols * 9);
    format!("pipeline detects bin {RANGE_BIN} at {speed:.3} m/s; STFT peak on the predicted row in {exact}/{} columns", raw.cols)
}

/// Monte Carlo false-alarm rate of CA-CFAR on exponential noise over 1e5 cells.
pub fn cfar_false_alarms() -> String {
    let mut r = gaitsada_core::rng::stream(2024, &[]);
    let cells = 100_000;
    let mut rates = Vec::new();
    for &pfa in &[1e-2, 1e-3] {
        let cfg = CfarConfig::for_pfa(16, 2, pfa);
        let mut alarms = 0usize;
        let mut tested = 0usize;
        for _ in 0..cells / 1000 {
            // square-law detected complex Gaussian noise is exponential
            let power: Vec<f64> = (0..1000).map(|_| Exp1.sample(&mut r)).collect();
            alarms += cfar_detect(&power, &cfg).unwrap().len();
            tested += power.len();
        }
        let empirical = alarms as f64 / tested as f64;
        assert!(
            empirical > pfa / 2.0 && empirical < pfa * 2.0,
            "pfa {pfa}: empirical {empirical} from {alarms} alarms"
        );
        rates.push(format!("{pfa:.0e} -> {empirical:.2e}"));
    }
    format!("CFAR Pfa over {cells} cells: {}", rates.join(", "))
}

/// Share of each STFT column within one bin of a pure tone.
pub fn stft_concentration() -> String {
    let cfg = StftConfig {
        window_len: 128,
        hop: 32,
        window: WindowFn::Hann,
    };
    let n = cfg.window_len as f64;
    let mut worst: f64 = 1.0;
    for &cycles in &[1.0, 7.0, 7.25, 7.5, -20.0, -33.4, 50.0] {
        let f = cycles / n;
        let signal: Vec<Complex64> = (0..4096).map(|t| Complex64::from_polar(1.0, 2.0 * PI * f * t as f64)).collect();
        let (rows, cols, mag) = stft_magnitude(&signal, &cfg).unwrap();
        let row = (rows as i64 / 2 + cycles.round() as i64) as usize;
        for col in 0..cols {
            let total: f64 = (0..rows).map(|r| mag[r * cols + col].powi(2)).sum();
            let near: f64 = (row - 1..=row + 1).map(|r| mag[r * cols + col].powi(2)).sum();
            assert!(near / total >= 0.9, "tone {cycles} bins: share {}", near / total);
            worst = worst.min(near / total);
        }
    }
    format!("STFT worst +-1 bin energy share {worst:.3}")
}
