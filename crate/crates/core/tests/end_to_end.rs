use std::time::Instant;

use vsynth::pipeline::{run_all, Capture, PipelineConfig};
use vsynth::synth::synthesize_latents;
use vsynth::synthetic::{generate, Preset};
use vsynth::viseme::VisemeDict;

#[test]
fn tiny_scene_round_trip_through_every_stage() {
    let scene = generate(Preset::Tiny, 11).unwrap();
    let capture = Capture::from_scene(&scene);
    let config = PipelineConfig::default();
    let start = Instant::now();
    let run = run_all(&capture, &scene.annotations, &config).unwrap();
    eprintln!("pipeline on {} frames: {:?}", scene.num_frames(), start.elapsed());

    for (k, (fit, truth)) in run.tracking.reference.t.iter().zip(&scene.truth[0].t).enumerate() {
        assert!((fit - truth).abs() < 1e-3, "reference pose parameter {k}: {fit} vs {truth}");
    }
    let worst = run
        .tracking
        .params
        .iter()
        .zip(&scene.truth)
        .map(|(p, t)| p.t.iter().zip(&t.t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    eprintln!("worst tracked pose error {worst:.3e}");
    assert!(worst < 1e-2);

    assert_eq!(run.latents.frames(), scene.num_frames());
    assert_eq!(run.db.len(), scene.annotations.len());
    assert_eq!(run.table.len(), run.db.len() * run.db.len());

    let query = VisemeDict::default().phonemes_to_extended("k a l t").unwrap();
    let result = synthesize_latents(&query, &run.db, &run.table, &config.synthesis).unwrap();
    let word = scene.word("k a l t").unwrap();
    let first = run.db.get(result.ids[0]).unwrap().source.clone().unwrap();
    let last = run.db.get(*result.ids.last().unwrap()).unwrap().source.clone().unwrap();
    assert!(first.start <= word.start && last.end >= word.end);
    assert_eq!(result.energy.total, 0.0);
    let d = run.latents.d;
    assert_eq!(result.raw, &run.latents.data[first.start * d..last.end * d]);
}
