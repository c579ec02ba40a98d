//! Reference implementations written independently of the crate's fast
//! paths: literal loops over the defining sums.

use fabulight_core::kernels::conv::ConvGeom;
use fabulight_core::model::layers::{Builder, Conv, Ctx};
use fabulight_core::model::encoders::graph_conv;
use fabulight_core::params::{Initializer, ParamId, ParamStore};
use fabulight_core::skeleton::{BodyVariant, PartitionedAdjacency, SkeletonTopology};
use fabulight_core::Tensor;
use rand::Rng;

pub const UNREACHABLE: usize = usize::MAX / 4;

/// All-pairs shortest hops by Floyd–Warshall.
pub fn floyd(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut d = vec![UNREACHABLE; n * n];
    for i in 0..n {
        d[i * n + i] = 0;
    }
    for &(a, b) in edges {
        d[a * n + b] = 1;
        d[b * n + a] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i * n + k] + d[k * n + j];
                if via < d[i * n + j] {
                    d[i * n + j] = via;
                }
            }
        }
    }
    d
}

/// The partition rule applied literally, one `(r, i, j)` triple at a time.
pub fn brute_partition(topo: &SkeletonTopology, radius: usize) -> Vec<Vec<f64>> {
    let n = topo.n_joints;
    let d = floyd(n, &topo.edges);
    let c = topo.central;
    let rr = radius as isize;
    (-rr..=rr)
        .map(|r| {
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    let hit = if r == 0 {
                        i == j
                    } else {
                        let centripetal = d[i * n + c] <= d[j * n + c];
                        d[i * n + j] == r.unsigned_abs() && if r < 0 { centripetal } else { !centripetal }
                    };
                    if hit {
                        m[i * n + j] = 1.0;
                    }
                }
            }
            m
        })
        .collect()
}

/// `D^{-1/2} A D^{-1/2}` by explicit diagonal matrices and matrix products.
pub fn dense_normalize(a: &[f64], n: usize, eps: f64) -> Vec<f64> {
    let mut dinv = vec![0.0; n * n];
    for i in 0..n {
        let deg: f64 = a[i * n..(i + 1) * n].iter().sum::<f64>() + eps;
        dinv[i * n + i] = 1.0 / deg.sqrt();
    }
    let mm = |x: &[f64], y: &[f64]| {
        let mut z = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                z[i * n + j] = (0..n).map(|k| x[i * n + k] * y[k * n + j]).sum();
            }
        }
        z
    };
    mm(&mm(&dinv, a), &dinv)
}

/// `Z[n,c,w,t] = Σ_r Σ_v B^r[v,w] · Σ_i W[r·C+c, i] · X[n,i,v,t]`.
pub fn naive_graph_conv(x: &Tensor<f64>, w: &[f64], b: &Tensor<f64>, c_out: usize) -> Tensor<f64> {
    let (n, ci, v, t) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[4]);
    let k = b.shape()[0];
    let mut z = Tensor::zeros(&[n, c_out, v, 1, t]);
    for s in 0..n {
        for c in 0..c_out {
            for j in 0..v {
                for f in 0..t {
                    let mut acc = 0.0;
                    for r in 0..k {
                        for i in 0..v {
                            let m: f64 = (0..ci).map(|q| w[(r * c_out + c) * ci + q] * x.at(&[s, q, i, 0, f])).sum();
                            acc += b.at(&[r, i, j]) * m;
                        }
                    }
                    z.set(&[s, c, j, 0, f], acc);
                }
            }
        }
    }
    z
}

pub struct GraphConvCase {
    pub store: ParamStore<f64>,
    pub conv: Conv,
    pub adjacency: ParamId,
    pub kernel: usize,
    pub x: Tensor<f64>,
    pub c_out: usize,
}

/// A random skeleton, radius, channel count and batch, with a perturbed
/// adjacency (the learnable copy drifts from its initialization).
pub fn graph_conv_case(seed: u64) -> GraphConvCase {
    let mut r = super::rng(seed);
    let variant = if r.gen_bool(0.5) { BodyVariant::Whole } else { BodyVariant::Upper };
    let radius = r.gen_range(1..=2);
    let kernel = 2 * radius + 1;
    let (c_in, c_out, n, t) = (r.gen_range(1..4), r.gen_range(1..4), r.gen_range(1..3), r.gen_range(1..6));
    let topo = SkeletonTopology::build(variant);
    let v = topo.n_joints;
    let part = PartitionedAdjacency::build(&topo, radius).unwrap();
    let bmat: Vec<f64> = part.b_stacked().iter().map(|&e| e + r.gen_range(-0.5..0.5)).collect();
    let mut store = ParamStore::new();
    let mut init = Initializer::new(seed);
    let mut b = Builder {
        store: &mut store,
        init: &mut init,
    };
    let conv = b.conv("g", c_in, kernel * c_out, ConvGeom::POINTWISE).unwrap();
    let adjacency = b.raw("g.adjacency", Tensor::from_vec(&[kernel, v, v], bmat).unwrap()).unwrap();
    let x = super::random_tensor(&[n, c_in, v, 1, t], &mut r, -1.0, 1.0);
    GraphConvCase {
        store,
        conv,
        adjacency,
        kernel,
        x,
        c_out,
    }
}

/// Largest absolute gap between `graph_conv` and the naive sum over `cases` random cases.
pub fn graph_conv_worst_gap(cases: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..cases {
        let case = graph_conv_case(seed);
        let mut cx = Ctx::new(&case.store, false);
        let xv = cx.graph.input(case.x.clone());
        let z = graph_conv(&mut cx, xv, &case.conv, case.adjacency, case.kernel).unwrap();
        let want = naive_graph_conv(
            &case.x,
            case.store.tensor(case.conv.weight).data(),
            case.store.tensor(case.adjacency),
            case.c_out,
        );
        assert_eq!(cx.graph.shape(z), want.shape());
        worst = worst.max(cx.graph.value(z).max_abs_diff(&want));
    }
    worst
}

/// AP from the precision/recall table: one row per distinct threshold θ
/// (predict positive when score ≥ θ), summing `(R_k − R_{k−1}) · P_k`.
pub fn pr_table_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let positives = labels.iter().filter(|&&l| l).count() as f64;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for th in thresholds {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (&s, &l) in scores.iter().zip(labels) {
            if s >= th {
                if l {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        let recall = tp / positives;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    ap
}

/// A random AP instance with at least one positive, scores on a coarse
/// grid so ties are common.
pub fn ap_instance(seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut r = super::rng(seed);
    let n = r.gen_range(1..=20);
    let grid = r.gen_range(2..=10);
    let scores: Vec<f64> = (0..n).map(|_| f64::from(r.gen_range(0..=grid)) / f64::from(grid)).collect();
    let mut labels: Vec<bool> = (0..n).map(|_| r.gen_bool(0.4)).collect();
    let k = r.gen_range(0..n);
    labels[k] = true;
    (scores, labels)
}
