mod common;

use common::oracles::{graph_conv_case, graph_conv_worst_gap};

use fabulight_core::error::Error;
use fabulight_core::kernels::conv::ConvGeom;
use fabulight_core::loss::Mode;
use fabulight_core::model::encoders::{graph_conv, FEATURE_DIM};
use fabulight_core::model::layers::Ctx;
use fabulight_core::model::{Architecture, Batch, Model};
use fabulight_core::params::ParamStore;
use fabulight_core::skeleton::BodyVariant;
use fabulight_core::Tensor;

fn feature_shapes(model: &Model<f32>, batch: &Batch<f32>, mode: Mode) -> Vec<(&'static str, Vec<usize>)> {
    let fwd = model.forward(batch, mode, false).unwrap();
    fwd.features.iter().map(|&(n, v)| (n, fwd.ctx.graph.shape(v).to_vec())).collect()
}

fn cast(b: Batch<f64>) -> Batch<f32> {
    Batch {
        faces: b.faces.cast(),
        mfcc: b.mfcc.cast(),
        poses: b.poses.map(|p| p.cast()),
    }
}

#[test]
fn every_encoder_emits_128_by_t() {
    let whole = Model::<f32>::new(Architecture::fabulight(BodyVariant::Whole), 1).unwrap();
    let upper = Model::<f32>::new(Architecture::fabulight(BodyVariant::Upper), 1).unwrap();
    let light = Model::<f32>::new(Architecture::lightasd(), 1).unwrap();
    for t in [1, 7, 40] {
        for (model, mode) in [(&whole, Mode::FabuLight), (&upper, Mode::FabuLight), (&light, Mode::LightAsd)] {
            let batch = cast(common::random_batch(&model.arch, 1, t, t as u64));
            let shapes = feature_shapes(model, &batch, mode);
            assert_eq!(shapes.len(), if mode == Mode::FabuLight { 3 } else { 2 });
            for (name, s) in &shapes {
                assert_eq!(s, &vec![1, FEATURE_DIM, t], "{name} at T={t}");
            }
            let fwd = model.forward(&batch, mode, false).unwrap();
            assert_eq!(fwd.ctx.graph.shape(fwd.fused), &[1, FEATURE_DIM, t]);
            for &(kind, h) in &fwd.heads {
                assert_eq!(fwd.ctx.graph.shape(h), &[1, t, 2], "{kind:?}");
            }
            let p = model.predict(&batch, mode, 1.0).unwrap();
            assert_eq!(p.len(), t);
            assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn face_stage_sizes_follow_the_stride_and_pool_schedule() {
    let model = Model::<f32>::new(Architecture::lightasd(), 2).unwrap();
    let batch = cast(common::random_batch(&model.arch, 1, 2, 3));
    let mut cx = Ctx::new(&model.store, false);
    let mut h = cx.graph.input(batch.faces.clone());
    let mut sizes = vec![cx.graph.shape(h)[2]];
    let pool = ConvGeom::new([3, 3, 1], [2, 2, 1], [1, 1, 0]);
    for (i, block) in model.face.blocks.iter().enumerate() {
        h = block.forward(&mut cx, h).unwrap();
        sizes.push(cx.graph.shape(h)[2]);
        if i < 2 {
            h = cx.graph.max_pool(h, pool).unwrap();
            sizes.push(cx.graph.shape(h)[2]);
        }
    }
    assert_eq!(sizes, vec![112, 56, 28, 28, 14, 14]);
    assert_eq!(cx.graph.shape(h), &[1, 128, 14, 14, 2]);

    let mut h = cx.graph.input(batch.mfcc.clone());
    let mut steps = vec![cx.graph.shape(h)[4]];
    let tpool = ConvGeom::new([1, 1, 3], [1, 1, 2], [0, 0, 1]);
    for (i, block) in model.audio.blocks.iter().enumerate() {
        h = block.forward(&mut cx, h).unwrap();
        if i < 2 {
            h = cx.graph.max_pool(h, tpool).unwrap();
            steps.push(cx.graph.shape(h)[4]);
        }
    }
    assert_eq!(steps, vec![8, 4, 2]);
    assert_eq!(cx.graph.shape(h), &[1, 128, 13, 1, 2]);
}

#[test]
fn audio_of_40_vectors_gives_10_frames() {
    let model = Model::<f32>::new(Architecture::lightasd().with_face_size(16), 4).unwrap();
    let mut r = common::rng(4);
    let mfcc = common::random_tensor(&[1, 1, 13, 1, 40], &mut r, -1.0, 1.0).cast::<f32>();
    let mut cx = Ctx::new(&model.store, false);
    let x = cx.graph.input(mfcc);
    let y = model.audio.forward(&mut cx, x).unwrap();
    assert_eq!(cx.graph.shape(y), &[1, 128, 10]);

    let bad = cx.graph.input(Tensor::zeros(&[1, 1, 13, 1, 42]));
    assert!(matches!(model.audio.forward(&mut cx, bad), Err(Error::Alignment(_))));
}

#[test]
fn zeroed_block_weights_give_zero_output() {
    let mut model = Model::<f64>::new(Architecture::lightasd().with_face_size(16), 5).unwrap();
    let block = model.face.blocks[1].clone();
    for p in &block.paths {
        for id in [p.spatial.weight, p.temporal.weight] {
            model.store.tensor_mut(id).data_mut().fill(0.0);
        }
    }
    let mut r = common::rng(5);
    for training in [false, true] {
        let mut cx = Ctx::new(&model.store, training);
        let x = cx.graph.input(common::random_tensor(&[2, 32, 4, 4, 3], &mut r, -1.0, 1.0));
        let y = block.forward(&mut cx, x).unwrap();
        assert_eq!(cx.graph.shape(y), &[2, 64, 4, 4, 3]);
        assert!(cx.graph.value(y).data().iter().all(|&v| v == 0.0));
    }
    let mut cx = Ctx::new(&model.store, false);
    let x = cx.graph.input(common::random_tensor(&[1, 1, 16, 16, 2], &mut r, 0.0, 1.0));
    let y = model.face.blocks[0].forward(&mut cx, x).unwrap();
    assert_eq!(cx.graph.shape(y), &[1, 32, 8, 8, 2]);
}

#[test]
fn graph_conv_matches_naive_contraction() {
    let worst = graph_conv_worst_gap(100);
    assert!(worst <= 1e-10, "{worst:e}");
}

#[test]
fn graph_conv_degenerate_cases() {
    let mut case = (7..).map(graph_conv_case).find(|c| c.kernel == 3).unwrap();
    let v = case.x.shape()[2];
    let run = |store: &ParamStore<f64>| {
        let mut cx = Ctx::new(store, false);
        let xv = cx.graph.input(case.x.clone());
        let m = cx.conv(xv, &case.conv).unwrap();
        let z = graph_conv(&mut cx, xv, &case.conv, case.adjacency, 3).unwrap();
        (cx.graph.value(m).clone(), cx.graph.value(z).clone())
    };
    case.store.tensor_mut(case.adjacency).data_mut().fill(0.0);
    let (_, z) = run(&case.store);
    assert!(z.data().iter().all(|&e| e == 0.0));

    // identity on the r = 0 slot (middle of r = -1, 0, 1) selects that channel block
    let b = case.store.tensor_mut(case.adjacency);
    for j in 0..v {
        b.set(&[1, j, j], 1.0);
    }
    let (m, z) = run(&case.store);
    let c = case.c_out;
    let plane = v * case.x.shape()[4];
    for s in 0..case.x.shape()[0] {
        for ch in 0..c {
            let got = &z.data()[(s * c + ch) * plane..][..plane];
            let want = &m.data()[((s * 3 + 1) * c + ch) * plane..][..plane];
            assert_eq!(got, want);
        }
    }

    let mut cx = Ctx::new(&case.store, false);
    let xv = cx.graph.input(case.x.clone());
    assert!(matches!(graph_conv(&mut cx, xv, &case.conv, case.adjacency, 5), Err(Error::Config(_))));
}

#[test]
fn every_path_owns_its_adjacency() {
    let mut model = Model::<f64>::new(Architecture::fabulight(BodyVariant::Upper).with_face_size(16), 8).unwrap();
    let body = model.body.clone().unwrap();
    let ids: Vec<_> = body.blocks.iter().flat_map(|b| b.paths.iter().map(|p| p.adjacency)).collect();
    for (i, a) in ids.iter().enumerate() {
        assert!(ids[i + 1..].iter().all(|b| b != a));
    }
    let block = &body.blocks[0];
    let (k3, k5) = (&block.paths[0], &block.paths[1]);
    assert_eq!((k3.kernel, k5.kernel), (3, 5));
    let mut r = common::rng(8);
    let x = common::random_tensor(&[1, 3, 11, 1, 6], &mut r, -1.0, 1.0);
    let outputs = |store: &ParamStore<f64>| {
        let mut cx = Ctx::new(store, false);
        let xv = cx.graph.input(x.clone());
        let a = graph_conv(&mut cx, xv, &k3.graph, k3.adjacency, 3).unwrap();
        let b = graph_conv(&mut cx, xv, &k5.graph, k5.adjacency, 5).unwrap();
        (cx.graph.value(a).clone(), cx.graph.value(b).clone())
    };
    let (a0, b0) = outputs(&model.store);
    let before_k5 = model.store.tensor(k5.adjacency).clone();
    let b = model.store.tensor_mut(k3.adjacency);
    let v = b.at(&[1, 0, 0]);
    b.set(&[1, 0, 0], v + 0.75);
    let (a1, b1) = outputs(&model.store);
    assert!(a0.max_abs_diff(&a1) > 0.0);
    assert_eq!(b0, b1);
    assert_eq!(model.store.tensor(k5.adjacency), &before_k5);
    // every copy starts from the same normalized partition
    let first = model.store.tensor(body.blocks[0].paths[1].adjacency).clone();
    assert_eq!(model.store.tensor(body.blocks[2].paths[1].adjacency), &first);
}

#[test]
fn body_encoder_checks_joint_count() {
    let model = Model::<f64>::new(Architecture::fabulight(BodyVariant::Whole).with_face_size(16), 9).unwrap();
    let mut cx = Ctx::new(&model.store, false);
    let x = cx.graph.input(Tensor::zeros(&[1, 3, 11, 1, 4]));
    assert!(matches!(model.body.as_ref().unwrap().forward(&mut cx, x), Err(Error::Dimension(_))));
    let x = cx.graph.input(Tensor::zeros(&[1, 3, 17, 1, 10]));
    let y = model.body.as_ref().unwrap().forward(&mut cx, x).unwrap();
    assert_eq!(cx.graph.shape(y), &[1, 128, 10]);
}

#[test]
fn inference_is_bit_deterministic() {
    let arch = Architecture::fabulight(BodyVariant::Whole).with_face_size(24);
    let a = Model::<f32>::new(arch, 10).unwrap();
    let b = Model::<f32>::new(arch, 10).unwrap();
    assert_eq!(a.store.flat_values(), b.store.flat_values());
    let batch = cast(common::random_batch(&arch, 2, 5, 10));
    let run = |m: &Model<f32>| {
        let fwd = m.forward(&batch, Mode::FabuLight, false).unwrap();
        let mut out: Vec<Vec<f32>> = fwd.features.iter().map(|f| fwd.ctx.graph.value(f.1).data().to_vec()).collect();
        out.extend(fwd.heads.iter().map(|h| fwd.ctx.graph.value(h.1).data().to_vec()));
        out
    };
    let first = run(&a);
    assert_eq!(first, run(&a));
    assert_eq!(first, run(&b));
}

#[test]
fn body_blocks_act_locally_in_time() {
    let model = Model::<f64>::new(Architecture::fabulight(BodyVariant::Upper).with_face_size(16), 11).unwrap();
    let body = model.body.as_ref().unwrap();
    let (t, hit) = (24, 12);
    let mut r = common::rng(11);
    let x = common::random_tensor(&[1, 3, 11, 1, t], &mut r, -1.0, 1.0);
    let mut zeroed = x.clone();
    for c in 0..3 {
        for j in 0..11 {
            zeroed.set(&[0, c, j, 0, hit], 0.0);
        }
    }
    let mut cx = Ctx::new(&model.store, false);
    let (mut a, mut b) = (cx.graph.input(x), cx.graph.input(zeroed));
    for (depth, block) in body.blocks.iter().enumerate() {
        a = block.forward(&mut cx, a).unwrap();
        b = block.forward(&mut cx, b).unwrap();
        let reach = 2 * (depth + 1);
        let (va, vb) = (cx.graph.value(a), cx.graph.value(b));
        let shape = va.shape().to_vec();
        let mut changed_inside = false;
        for c in 0..shape[1] {
            for j in 0..shape[2] {
                for f in 0..t {
                    let d = (va.at(&[0, c, j, 0, f]) - vb.at(&[0, c, j, 0, f])).abs();
                    if f.abs_diff(hit) > reach {
                        assert_eq!(d, 0.0, "block {} frame {f}", depth + 1);
                    } else if d > 0.0 {
                        changed_inside = true;
                    }
                }
            }
        }
        assert!(changed_inside);
    }
}
