mod common;

use common::*;
use proptest::prelude::*;
use timebar_core::ingest::{
    frame_file_name, parse_frame_file_name, sample_at_fps, sample_frames, scaled_dimensions, uniform_timestamps,
    DecoderConfig, IngestError, SamplingSpec, VideoSource,
};
use timebar_core::interval::Interval;
use timebar_core::synthetic::{fixture_frame, token_activations, FixtureSpec};

fn args(s: &[&str]) -> Vec<String> {
    s.iter().map(|a| a.to_string()).collect()
}

#[test]
fn whole_video_timestamps() {
    let ts = uniform_timestamps(Interval::new(0.0, 32.0).unwrap(), 32);
    let expected: Vec<f64> = (0..32).map(|j| j as f64 + 0.5).collect();
    assert_eq!(ts, expected);
}

#[test]
fn window_timestamps() {
    let ts = uniform_timestamps(Interval::new(10.0, 60.0).unwrap(), 4);
    assert_eq!(ts, vec![16.25, 28.75, 41.25, 53.75]);
}

#[test]
fn resize_examples() {
    assert_eq!(scaled_dimensions(1920, 1080, 480), (480, 270));
    assert_eq!(scaled_dimensions(1080, 1920, 480), (270, 480));
    assert_eq!(scaled_dimensions(480, 480, 480), (480, 480));
    assert_eq!(scaled_dimensions(4000, 3, 480), (480, 1));
}

#[test]
fn sampled_frames_are_resized_and_stamped() {
    let (_dir, source, _) = cat_fixture();
    let spec = SamplingSpec { n_frames: 8, long_side: 320 };
    let seq = sample_frames(&source, &spec, None).unwrap();
    assert_eq!(seq.len(), 8);
    assert_eq!(seq.timestamps(), vec![5.0, 15.0, 25.0, 35.0, 45.0, 55.0, 65.0, 75.0]);
    for f in seq.frames() {
        assert_eq!((f.width(), f.height()), (320, 180));
    }
    let window = seq.window();
    assert_eq!((window.start(), window.end()), (0.0, 80.0));
    // the planted block survives resizing
    let act = token_activations(&seq.frames()[2..3]);
    assert!(act[timebar_core::synthetic::token_id("cat").unwrap()] > 0.9);
}

#[test]
fn full_window_equals_no_window() {
    let (_dir, source, _) = cat_fixture();
    let spec = SamplingSpec { n_frames: 6, long_side: 64 };
    let a = sample_frames(&source, &spec, None).unwrap();
    let b = sample_frames(&source, &spec, Some(Interval::new(0.0, 80.0).unwrap())).unwrap();
    assert_eq!(a.timestamps(), b.timestamps());
    for (x, y) in a.frames().iter().zip(b.frames()) {
        assert_eq!(x.pixels(), y.pixels());
    }
}

#[test]
fn window_past_the_end_is_rejected() {
    let (_dir, source, _) = cat_fixture();
    let spec = SamplingSpec { n_frames: 4, long_side: 64 };
    let err = sample_frames(&source, &spec, Some(Interval::new(70.0, 90.0).unwrap())).unwrap_err();
    assert!(matches!(err, IngestError::WindowOutside { .. }));
    let bad = SamplingSpec { n_frames: 0, long_side: 64 };
    assert!(matches!(sample_frames(&source, &bad, None), Err(IngestError::BadSpec(_))));
}

#[test]
fn fps_sampling_counts() {
    let (_dir, source) = write_fixture(&FixtureSpec::new(60.0, vec![]));
    let seq = sample_at_fps(&source, 1.0, 64).unwrap();
    assert_eq!(seq.len(), 60);
    assert_eq!(seq.timestamps()[59], 59.0);

    let (_dir, short) = write_fixture(&FixtureSpec::new(7.9, vec![]));
    assert_eq!(sample_at_fps(&short, 1.0, 64).unwrap().len(), 7);

    let (_dir, tiny) = write_fixture(&FixtureSpec::new(0.5, vec![]));
    assert!(matches!(sample_at_fps(&tiny, 1.0, 64), Err(IngestError::NoFrames { .. })));
    assert!(matches!(sample_at_fps(&source, 0.0, 64), Err(IngestError::BadSpec(_))));
}

#[test]
fn frame_directory_needs_a_manifest() {
    let dir = scratch();
    assert!(matches!(VideoSource::frame_directory(dir.path()), Err(IngestError::Unreadable { .. })));
    std::fs::write(dir.path().join("manifest.json"), r#"{"duration_s": -1, "fps": 1}"#).unwrap();
    assert!(matches!(VideoSource::frame_directory(dir.path()), Err(IngestError::BadManifest { .. })));
}

#[test]
fn frame_file_names_round_trip() {
    assert_eq!(frame_file_name(12.5), "frame_000012500.png");
    assert_eq!(parse_frame_file_name("frame_000012500.png"), Some(12.5));
    assert_eq!(parse_frame_file_name("frame_12500.png"), None);
    assert_eq!(parse_frame_file_name("other.png"), None);
}

#[test]
fn decoder_subprocess_templates() {
    let dir = scratch();
    let spec = FixtureSpec::new(30.0, vec![moment("dog", 0.0, 30.0)]);
    let still = dir.path().join("still.png");
    fixture_frame(&spec, 1.0).save(&still).unwrap();
    let video = dir.path().join("clip.mp4");
    std::fs::write(&video, b"not really a video").unwrap();

    let decoder = DecoderConfig {
        extract: args(&["cp", still.to_str().unwrap(), "{output}"]),
        probe: args(&["echo", "30.0"]),
    };
    let source = VideoSource::open(&video, &decoder).unwrap();
    assert_eq!(source.duration(), 30.0);
    assert_eq!(source.video_id(), "clip");
    let seq = sample_frames(&source, &SamplingSpec { n_frames: 3, long_side: 80 }, None).unwrap();
    assert_eq!(seq.timestamps(), vec![5.0, 15.0, 25.0]);
    assert_eq!((seq.frames()[0].width(), seq.frames()[0].height()), (80, 45));

    let time_log = dir.path().join("times.txt");
    let logging = DecoderConfig {
        extract: args(&[
            "sh",
            "-c",
            &format!("echo {{time}} >> {} && cp {} {{output}}", time_log.display(), still.display()),
        ]),
        probe: args(&["echo", "30.0"]),
    };
    let source = VideoSource::open(&video, &logging).unwrap();
    sample_frames(&source, &SamplingSpec { n_frames: 3, long_side: 80 }, None).unwrap();
    assert_eq!(std::fs::read_to_string(&time_log).unwrap(), "5.000\n15.000\n25.000\n");

    let failing = DecoderConfig {
        extract: args(&["sh", "-c", "echo boom >&2; exit 3"]),
        probe: args(&["echo", "30.0"]),
    };
    let source = VideoSource::open(&video, &failing).unwrap();
    match sample_frames(&source, &SamplingSpec { n_frames: 2, long_side: 80 }, None) {
        Err(IngestError::Decoder { program, stderr, .. }) => {
            assert_eq!(program, "sh");
            assert!(stderr.contains("boom"));
        }
        other => panic!("expected a decoder error, got {other:?}"),
    }

    let bad_probe = DecoderConfig {
        extract: decoder.extract.clone(),
        probe: args(&["echo", "soon"]),
    };
    assert!(matches!(VideoSource::open(&video, &bad_probe), Err(IngestError::Decoder { .. })));
    let missing = DecoderConfig {
        extract: decoder.extract.clone(),
        probe: args(&["definitely-not-a-decoder-binary"]),
    };
    assert!(VideoSource::open(&video, &missing).is_err());
}

proptest! {
    #[test]
    fn timestamps_are_centered_and_inside(start in 0.0f64..500.0, len in 0.01f64..500.0, n in 1usize..64) {
        let w = Interval::new(start, start + len).unwrap();
        let ts = uniform_timestamps(w, n);
        prop_assert_eq!(ts.len(), n);
        let step = len / n as f64;
        for (j, t) in ts.iter().enumerate() {
            prop_assert!(*t > w.start() && *t < w.end());
            prop_assert!((t - (start + (j as f64 + 0.5) * step)).abs() < 1e-9);
        }
        for pair in ts.windows(2) {
            prop_assert!(pair[0] < pair[1]);
        }
    }

    #[test]
    fn scaled_long_side_is_exact(w in 1u32..5000, h in 1u32..5000, long in 16u32..2000) {
        let (nw, nh) = scaled_dimensions(w, h, long);
        prop_assert_eq!(nw.max(nh), long);
        prop_assert!(nw.min(nh) >= 1);
        // aspect error stays under one pixel
        let expected = w.min(h) as f64 * long as f64 / w.max(h) as f64;
        prop_assert!((nw.min(nh) as f64 - expected).abs() <= 0.5 + 1e-9 || nw.min(nh) == 1);
    }
}
