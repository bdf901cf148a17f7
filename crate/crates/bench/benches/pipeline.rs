//! Hot paths of the pipeline: analysis/synthesis, the stable sampler, the
//! batched decoder, and one full Gibbs sweep at desk scale.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use quieten_core::audio_io::synth_speech_like;
use quieten_core::mcem::{gibbs_sweep, GainVector, NoiseParams, SamplerState, SpeechVariance};
use quieten_core::stable::PositiveStableSampler;
use quieten_core::stft::{istft, stft};
use quieten_core::vae::encode_means;
use quieten_core::{AlphaParam, RngStream, VaeParams};

fn bench_stft(c: &mut Criterion) {
    let w = synth_speech_like(200, 1, 16_000).unwrap();
    c.bench_function("stft_istft_3s", |b| {
        b.iter(|| {
            let spec = stft(black_box(&w), 1024, 256).unwrap();
            istft(black_box(&spec)).unwrap()
        })
    });
}

fn bench_impulse_sampler(c: &mut Criterion) {
    let sampler = PositiveStableSampler::impulse(AlphaParam::new(1.5).unwrap()).unwrap();
    let mut rng = RngStream::new(0, 0);
    c.bench_function("impulse_draws_1k", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for _ in 0..1000 {
                acc += sampler.sample(&mut rng);
            }
            black_box(acc)
        })
    });
}

fn bench_decode(c: &mut Criterion) {
    let mut rng = RngStream::new(2, 0);
    let vae = VaeParams::glorot_init(513, 64, 128, &mut rng).unwrap();
    let h = ndarray::Array2::from_shape_fn((200, 64), |(i, j)| ((i + 7 * j) % 13) as f64 * 0.1);
    c.bench_function("decode_200_frames", |b| {
        b.iter(|| black_box(&vae).var_batch(black_box(h.view())))
    });
}

fn bench_gibbs_sweep(c: &mut Criterion) {
    let w = synth_speech_like(200, 3, 16_000).unwrap();
    let x = stft(&w, 1024, 256).unwrap();
    let mut rng = RngStream::new(4, 0);
    let vae = VaeParams::glorot_init(x.n_freqs(), 64, 128, &mut rng).unwrap();
    let alpha = AlphaParam::new(1.8).unwrap();
    let noise = NoiseParams::ones(alpha, x.n_freqs());
    let gains = GainVector::ones(x.n_frames());
    let h0 = encode_means(&vae, x.power().t()).unwrap();
    let state0 = SamplerState::init(h0, &vae, alpha, 0.01, 0).unwrap();
    c.bench_function("gibbs_sweep_3s", |b| {
        b.iter_batched(
            || state0.clone(),
            |mut state| gibbs_sweep(&mut state, &x, &vae, &noise, &gains).unwrap(),
            criterion::BatchSize::LargeInput,
        )
    });
}

criterion_group!(
    benches,
    bench_stft,
    bench_impulse_sampler,
    bench_decode,
    bench_gibbs_sweep
);
criterion_main!(benches);
