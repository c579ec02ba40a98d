mod common;

use common::oracles::{brute_partition, dense_normalize, floyd, UNREACHABLE};
use fabulight_core::error::Error;
use fabulight_core::skeleton::{
    normalize_adjacency, render_graph_report, BodyVariant, PartitionedAdjacency, SkeletonTopology, DEGREE_EPS, NOSE,
};
use proptest::prelude::*;

/// Row degrees are summed over columns only, so a one-directional entry
/// `A_ij = 1` whose row `j` is empty reaches `1/sqrt((1+ε)·ε)`.
fn asymmetric_bound() -> f64 {
    1.0 / ((1.0 + DEGREE_EPS) * DEGREE_EPS).sqrt() + 1e-12
}

fn both() -> [SkeletonTopology; 2] {
    [SkeletonTopology::build(BodyVariant::Whole), SkeletonTopology::build(BodyVariant::Upper)]
}

#[test]
fn topologies_have_coco_sizes_and_are_connected() {
    let [whole, upper] = both();
    assert_eq!(whole.n_joints, 17);
    assert_eq!(upper.n_joints, 11);
    for t in [&whole, &upper] {
        assert_eq!(t.central, NOSE);
        assert_eq!(t.joint_name(t.central), "nose");
        assert!(t.edges.iter().all(|&(a, b)| a < t.n_joints && b < t.n_joints && a != b));
        let d = floyd(t.n_joints, &t.edges);
        assert!(d.iter().all(|&x| x < UNREACHABLE));
        assert!(t.is_connected());
        assert!(t.distances_from(NOSE).iter().all(|&x| x < t.n_joints));
    }
    let kept: Vec<_> = whole.edges.iter().filter(|&&(a, b)| a < 11 && b < 11).copied().collect();
    assert_eq!(upper.edges, kept);
}

#[test]
fn hop_distances_match_floyd() {
    for t in both() {
        let n = t.n_joints;
        let d = floyd(n, &t.edges);
        for i in 0..n {
            for j in 0..n {
                assert_eq!(t.hop_distance(i, j), d[i * n + j]);
                assert_eq!(t.hop_distance(i, j), t.hop_distance(j, i));
            }
        }
        // left wrist - left elbow - left shoulder
        assert_eq!(t.hop_distance(9, 5), 2);
        assert_eq!(t.hop_distance(NOSE, NOSE), 0);
    }
}

#[test]
fn partitions_match_brute_force_exactly() {
    for t in both() {
        for radius in [1, 2] {
            let p = PartitionedAdjacency::build(&t, radius).unwrap();
            assert_eq!(p.partitions(), 2 * radius + 1);
            assert_eq!(p.a, brute_partition(&t, radius), "{} R={radius}", t.variant.name());
            for (a, b) in p.a.iter().zip(&p.b) {
                let want = dense_normalize(a, t.n_joints, DEGREE_EPS);
                assert!(b.iter().zip(&want).all(|(x, y)| (x - y).abs() < 1e-12));
            }
        }
    }
}

#[test]
fn partition_examples() {
    for t in both() {
        let n = t.n_joints;
        for radius in [1, 2] {
            let p = PartitionedAdjacency::build(&t, radius).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let eye = if i == j { 1.0 } else { 0.0 };
                    assert_eq!(p.a_at(0)[i * n + j], eye);
                    let b0 = p.b_at(0)[i * n + j];
                    assert!((b0 - eye / 1.001).abs() < 1e-12);
                }
            }
            assert!(p.b.iter().flatten().all(|v| v.is_finite()));
            if radius == 1 && t.variant == BodyVariant::Whole {
                // knee (13) is centripetal to ankle (15); the ankle's own centripetal row is empty
                let b = p.b_at(-1)[13 * n + 15];
                assert!((b - 1.0 / (1.001f64 * 0.001).sqrt()).abs() < 1e-9, "{b}");
            }
        }
    }
    let whole = SkeletonTopology::build(BodyVariant::Whole);
    let p = PartitionedAdjacency::build(&whole, 1).unwrap();
    let n = whole.n_joints;
    let nb = whole.neighbours();
    for i in 0..n {
        let row: f64 = (0..n).map(|j| p.a_at(-1)[i * n + j] + p.a_at(1)[i * n + j]).sum();
        assert_eq!(row as usize, nb[i].len(), "joint {i}");
    }
    assert!((0.999001f64 - 1.0 / 1.001).abs() < 1e-6);
}

#[test]
fn bad_radius_is_a_configuration_error() {
    let t = SkeletonTopology::build(BodyVariant::Upper);
    for r in [0, 3, 7] {
        assert!(matches!(PartitionedAdjacency::build(&t, r), Err(Error::Config(_))));
    }
}

#[test]
fn normalization_examples() {
    assert_eq!(normalize_adjacency(&[0.0; 16], 4, 0.001), vec![0.0; 16]);
    let eye = normalize_adjacency(&[1.0, 0.0, 0.0, 1.0], 2, 0.001);
    assert!((eye[0] - 0.999001).abs() < 1e-6 && eye[1] == 0.0);
    let ones = normalize_adjacency(&[1.0; 4], 2, 0.001);
    assert!(ones.iter().all(|&v| (v - 1.0 / 2.001).abs() < 1e-12));
    assert!((ones[0] - 0.49975).abs() < 1e-5);
}

#[test]
fn report_names_joints_and_matrices() {
    let t = SkeletonTopology::build(BodyVariant::Whole);
    let p = PartitionedAdjacency::build(&t, 1).unwrap();
    let text = render_graph_report(&t, &p);
    for needle in ["nose", "right_ankle", "A[-1]", "A[+0]", "A[+1]", "B[-1]", "19 edges"] {
        assert!(text.contains(needle), "{needle}");
    }
}

/// A random connected graph: a random tree plus extra edges.
fn connected_graph() -> impl Strategy<Value = SkeletonTopology> {
    (2usize..14)
        .prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec(any::<prop::sample::Index>(), n - 1),
                prop::collection::vec((0..n, 0..n), 0..n),
                0..n,
            )
        })
        .prop_map(|(n, parents, extra, central)| {
            let mut edges: Vec<(usize, usize)> = parents.iter().enumerate().map(|(i, p)| (p.index(i + 1), i + 1)).collect();
            for (a, b) in extra {
                if a != b && !edges.contains(&(a, b)) && !edges.contains(&(b, a)) {
                    edges.push((a, b));
                }
            }
            SkeletonTopology {
                variant: BodyVariant::Whole,
                n_joints: n,
                edges,
                central,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn partitions_of_random_graphs(topo in connected_graph(), radius in 1usize..=2) {
        let n = topo.n_joints;
        let p = PartitionedAdjacency::build(&topo, radius).unwrap();
        prop_assert_eq!(&p.a, &brute_partition(&topo, radius));
        let d = floyd(n, &topo.edges);
        let rr = radius as isize;
        for i in 0..n {
            for j in 0..n {
                let hits: Vec<isize> = (-rr..=rr).filter(|&r| p.a_at(r)[i * n + j] == 1.0).collect();
                let dist = d[i * n + j];
                // disjoint, covering exactly the pairs within the radius
                prop_assert_eq!(hits.len(), usize::from(dist <= radius));
                for r in hits {
                    prop_assert_eq!(r.unsigned_abs(), dist);
                }
            }
        }
        for m in &p.b {
            prop_assert!(m.iter().all(|v| v.is_finite() && (0.0..=asymmetric_bound()).contains(v)));
        }
    }

    #[test]
    fn normalized_symmetric_matrices_lie_in_unit_interval(n in 1usize..10, bits in prop::collection::vec(any::<bool>(), 100)) {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = f64::from(u8::from(bits[i * 10 + j]));
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        let b = normalize_adjacency(&a, n, DEGREE_EPS);
        prop_assert!(b.iter().all(|v| (0.0..=1.0).contains(v)));
        let want = dense_normalize(&a, n, DEGREE_EPS);
        prop_assert!(b.iter().zip(&want).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn normalized_binary_matrices_are_bounded(n in 1usize..10, bits in prop::collection::vec(any::<bool>(), 100)) {
        let a: Vec<f64> = bits[..n * n].iter().map(|&b| f64::from(u8::from(b))).collect();
        let b = normalize_adjacency(&a, n, DEGREE_EPS);
        prop_assert!(b.iter().all(|v| (0.0..=asymmetric_bound()).contains(v)));
        let want = dense_normalize(&a, n, DEGREE_EPS);
        prop_assert!(b.iter().zip(&want).all(|(x, y)| (x - y).abs() < 1e-12));
    }
}
