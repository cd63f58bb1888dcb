mod common;

use std::time::{Duration, Instant};

use common::*;
use tile_ensemble::adapter::{AdapterPool, FrameKind};
use tile_ensemble::color::{lab_to_rgb, rgb_to_lab};
use tile_ensemble::enhancer::ExternalEnhancer;
use tile_ensemble::pattern::Scene;
use tile_ensemble::scale::{external_scale_predictor, luminance_scale_predictor};
use tile_ensemble::{averaged_estimate, make_tile_grid, ColorSpace, Enhancer, Error, Image, Tile, WeightFn, Window};

fn toy_cmd(args: &[&str]) -> Vec<String> {
    std::iter::once(TOY.to_string()).chain(args.iter().map(|s| s.to_string())).collect()
}

fn enhancer(args: &[&str]) -> ExternalEnhancer {
    ExternalEnhancer::new(toy_cmd(args), Duration::from_secs(30))
}

fn lab_tile(seed: u64, d: usize) -> Tile {
    Tile::new(rgb_to_lab(&Scene::new(seed).render(d, d)).unwrap(), Window::full()).unwrap()
}

#[test]
fn echo_server_round_trips_tiles() {
    let e = enhancer(&["echo"]);
    let t = lab_tile(1, 40);
    for inv in 0..3 {
        assert_eq!(e.enhance(&t, 2.0, inv).unwrap(), t);
    }
}

#[test]
fn echo_server_through_the_ensemble() {
    let img = Scene::new(2).render(72, 100);
    let grid = make_tile_grid(72, 100, 32, 0.8, Some(5)).unwrap();
    let out = averaged_estimate(&img, &enhancer(&["echo"]), &grid, WeightFn::Taper, 1.0).unwrap();
    assert!(max_abs(&out.image, &img) <= 1e-5);
}

#[test]
fn l_gain_matches_local_rule() {
    let t = lab_tile(3, 32);
    let out = enhancer(&["l-gain", "1.5"]).enhance(&t, 1.0, 0).unwrap();
    let n = 32 * 32;
    for i in 0..n {
        let expected = (t.image().data()[i] * 1.5).clamp(0.0, 100.0);
        assert_eq!(out.image().data()[i], expected);
    }
    assert_eq!(&out.image().data()[n..], &t.image().data()[n..]);
}

fn assert_adapter_err(args: &[&str], check: impl Fn(&Error) -> bool) {
    let e = enhancer(args);
    let err = e.enhance(&lab_tile(4, 32), 1.0, 0).unwrap_err();
    assert!(check(&err), "{args:?}: {err}");
}

#[test]
fn broken_servers_are_reported() {
    use tile_ensemble::AdapterError as A;
    assert_adapter_err(&["wrong-shape"], |e| matches!(e, Error::Adapter(A::ShapeMismatch { .. })));
    assert_adapter_err(&["short-frame"], |e| matches!(e, Error::Adapter(A::Malformed(_))));
    assert_adapter_err(&["bad-magic"], |e| matches!(e, Error::Adapter(A::Malformed(_))));
    assert_adapter_err(&["exit"], |e| matches!(e, Error::Adapter(A::Exited { .. } | A::Io(_))));
    let missing = ExternalEnhancer::new(vec!["/nonexistent/enhancer".into()], Duration::from_secs(5));
    assert!(matches!(missing.enhance(&lab_tile(4, 32), 1.0, 0), Err(Error::Adapter(A::Spawn { .. }))));
}

#[test]
fn hanging_server_times_out() {
    let e = ExternalEnhancer::new(toy_cmd(&["hang"]), Duration::from_millis(300));
    let start = Instant::now();
    let err = e.enhance(&lab_tile(5, 32), 1.0, 0).unwrap_err();
    assert!(matches!(err, Error::Adapter(tile_ensemble::AdapterError::Timeout(_))), "{err}");
    assert!(start.elapsed() < Duration::from_secs(10));
}

#[test]
fn cli_exit_codes_for_adapter_failures() {
    let dir = tempfile::tempdir().unwrap();
    let input = scene(dir.path(), "in.rawf32", 6, 48, 48);
    let out = dir.path().join("o.rawf32");
    let run = |mode: &str| {
        code(&["enhance", p(&input), p(&out), "--enhancer", &toy(mode), "--tile-size", "32", "--adapter-timeout", "2"])
    };
    assert_eq!(run("echo"), 0);
    assert_eq!(run("wrong-shape"), 5);
    assert_eq!(run("short-frame"), 6);
    assert_eq!(run("bad-magic"), 6);
    assert_eq!(run("exit"), 4);
    assert_eq!(run("hang"), 4);
    assert_eq!(
        code(&["enhance", p(&input), p(&out), "--enhancer", "exec:/nonexistent/enhancer", "--tile-size", "32"]),
        4
    );
}

#[test]
fn scale_predictor_constant() {
    let dark = Scene::new(7).render(30, 50);
    let pool = AdapterPool::new(toy_cmd(&["scl-const", "0.5"]), FrameKind::Scale, Duration::from_secs(30));
    let map = external_scale_predictor(&pool, &dark).unwrap();
    assert_eq!((map.height(), map.width()), (30, 50));
    assert!(map.p_long().iter().all(|&p| p == 0.5));
    assert!(!map.is_hard());
}

#[test]
fn scale_predictor_wrong_shape() {
    let dark = Scene::new(7).render(30, 50);
    let pool = AdapterPool::new(toy_cmd(&["scl-wrong-shape"]), FrameKind::Scale, Duration::from_secs(30));
    assert!(matches!(
        external_scale_predictor(&pool, &dark),
        Err(Error::Adapter(tile_ensemble::AdapterError::ShapeMismatch { .. }))
    ));
}

#[test]
fn scale_predictor_local_mean_matches_reimplementation() {
    let dark = Scene::new(8).render(40, 60).map(|v| v * 0.6);
    let pool = AdapterPool::new(toy_cmd(&["scl-local-mean", "0.45"]), FrameKind::Scale, Duration::from_secs(30));
    let remote = external_scale_predictor(&pool, &dark).unwrap();
    let local = luminance_scale_predictor(&dark, 1, 0.45).unwrap();
    let differ = remote.p_long().iter().zip(local.p_long()).filter(|(a, b)| a != b).count();
    assert!(differ <= 2, "{differ} pixels differ");
    assert!(local.p_long().iter().any(|&p| p == 1.0) && local.p_long().iter().any(|&p| p == 0.0));
}

#[test]
fn cli_with_external_predictor() {
    let dir = tempfile::tempdir().unwrap();
    let input = scene(dir.path(), "in.rawf32", 9, 48, 64);
    let out = dir.path().join("o.rawf32");
    cli_ok(&[
        "enhance", p(&input), p(&out), "--enhancer", "identity", "--tile-size", "32", "--predictor",
        &toy("scl-const 0.5"), "--mode", "soft", "--dump-intermediate",
    ]);
    let map = tile_ensemble::ScaleMap::load(dir.path().join("o_scale.rawf32")).unwrap();
    assert!(map.p_long().iter().all(|&p| p == 0.5));
    assert_eq!(
        code(&[
            "enhance", p(&input), p(&out), "--tile-size", "32", "--predictor", &toy("scl-wrong-shape"),
        ]),
        5
    );
}

#[test]
fn gray_input_is_promoted() {
    let dir = tempfile::tempdir().unwrap();
    let gray = Image::from_fn(40, 40, 1, ColorSpace::Srgb, |y, x, _| ((x + y) % 17) as f32 / 16.0).unwrap();
    let input = dir.path().join("g.rawf32");
    tile_ensemble::io::write_image(&input, &gray).unwrap();
    let out = dir.path().join("o.rawf32");
    cli_ok(&["enhance", p(&input), p(&out), "--enhancer", &toy("echo"), "--tile-size", "32"]);
    let res = load(&out);
    assert_eq!(res.channels(), 3);
    let back = lab_to_rgb(&rgb_to_lab(&tile_ensemble::color::to_rgb(&gray)).unwrap()).unwrap();
    assert!(max_abs(&res, &back) <= 1e-5);
}
