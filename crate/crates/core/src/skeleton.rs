//! COCO skeleton topologies and their spatial-configuration partitions.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{bail, Result};

pub const JOINT_NAMES: [&str; 17] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

/// The COCO-17 skeleton as drawn by the usual keypoint renderers.
pub const COCO_EDGES: [(usize, usize); 19] = [
    (15, 13),
    (13, 11),
    (16, 14),
    (14, 12),
    (11, 12),
    (5, 11),
    (6, 12),
    (5, 6),
    (5, 7),
    (6, 8),
    (7, 9),
    (8, 10),
    (1, 2),
    (0, 1),
    (0, 2),
    (1, 3),
    (2, 4),
    (3, 5),
    (4, 6),
];

pub const NOSE: usize = 0;

/// Added to every degree before the inverse square root.
pub const DEGREE_EPS: f64 = 0.001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BodyVariant {
    Whole,
    Upper,
}

impl BodyVariant {
    pub fn joints(self) -> usize {
        match self {
            BodyVariant::Whole => 17,
            BodyVariant::Upper => 11,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BodyVariant::Whole => "whole",
            BodyVariant::Upper => "upper",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkeletonTopology {
    pub variant: BodyVariant,
    pub n_joints: usize,
    pub edges: Vec<(usize, usize)>,
    pub central: usize,
}

impl SkeletonTopology {
    pub fn build(variant: BodyVariant) -> Self {
        let n = variant.joints();
        let edges = COCO_EDGES.iter().copied().filter(|&(a, b)| a < n && b < n).collect();
        Self {
            variant,
            n_joints: n,
            edges,
            central: NOSE,
        }
    }

    pub fn joint_name(&self, i: usize) -> &'static str {
        JOINT_NAMES[i]
    }

    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_joints];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// BFS distances from `src`; `usize::MAX` marks unreachable joints.
    pub fn distances_from(&self, src: usize) -> Vec<usize> {
        let adj = self.neighbours();
        let mut dist = vec![usize::MAX; self.n_joints];
        let mut queue = VecDeque::new();
        dist[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// All-pairs hop distances, row-major `V×V`.
    pub fn hop_matrix(&self) -> Vec<usize> {
        (0..self.n_joints).flat_map(|i| self.distances_from(i)).collect()
    }

    pub fn hop_distance(&self, i: usize, j: usize) -> usize {
        self.distances_from(i)[j]
    }

    pub fn is_connected(&self) -> bool {
        self.distances_from(self.central).iter().all(|&d| d != usize::MAX)
    }
}

/// `(D)^{-1/2} A (D)^{-1/2}` with `D_ii = Σ_k A_ik + eps`.
pub fn normalize_adjacency(a: &[f64], n: usize, eps: f64) -> Vec<f64> {
    let inv: Vec<f64> = (0..n)
        .map(|i| 1.0 / num_traits::Float::sqrt(a[i * n..(i + 1) * n].iter().sum::<f64>() + eps))
        .collect();
    let mut b = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            b[i * n + j] = inv[i] * a[i * n + j] * inv[j];
        }
    }
    b
}

/// The `2R+1` partition matrices, indexed `r = -R..=R` at position `r + R`.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionedAdjacency {
    pub radius: usize,
    pub n_joints: usize,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub eps: f64,
}

impl PartitionedAdjacency {
    pub fn build(topo: &SkeletonTopology, radius: usize) -> Result<Self> {
        if !(1..=2).contains(&radius) {
            bail!(Config, "partition radius must be 1 or 2, got {radius}");
        }
        let n = topo.n_joints;
        let hops = topo.hop_matrix();
        let to_centre = topo.distances_from(topo.central);
        let k = 2 * radius + 1;
        let mut a = vec![vec![0.0; n * n]; k];
        for i in 0..n {
            a[radius][i * n + i] = 1.0;
            for j in 0..n {
                let d = hops[i * n + j];
                if i == j || d > radius {
                    continue;
                }
                // ties go to the centripetal side
                let slot = if to_centre[i] <= to_centre[j] { radius - d } else { radius + d };
                a[slot][i * n + j] = 1.0;
            }
        }
        let b = a.iter().map(|m| normalize_adjacency(m, n, DEGREE_EPS)).collect();
        Ok(Self {
            radius,
            n_joints: n,
            a,
            b,
            eps: DEGREE_EPS,
        })
    }

    pub fn partitions(&self) -> usize {
        self.a.len()
    }

    pub fn a_at(&self, r: isize) -> &[f64] {
        &self.a[(r + self.radius as isize) as usize]
    }

    pub fn b_at(&self, r: isize) -> &[f64] {
        &self.b[(r + self.radius as isize) as usize]
    }

    /// `B` stacked as `[K, V, V]`.
    pub fn b_stacked(&self) -> Vec<f64> {
        self.b.concat()
    }
}

/// Joint names, edges and per-partition matrices as plain text.
pub fn render_graph_report(topo: &SkeletonTopology, part: &PartitionedAdjacency) -> String {
    let mut s = String::new();
    let n = topo.n_joints;
    let _ = writeln!(s, "skeleton: {} ({} joints, {} edges)", topo.variant.name(), n, topo.edges.len());
    let _ = writeln!(s, "central joint: {} ({})", topo.central, topo.joint_name(topo.central));
    let _ = writeln!(s, "joints:");
    let to_centre = topo.distances_from(topo.central);
    for (i, d) in to_centre.iter().enumerate() {
        let _ = writeln!(s, "  {i:>2} {:<15} hops to centre {d}", topo.joint_name(i));
    }
    let _ = writeln!(s, "edges:");
    for &(a, b) in &topo.edges {
        let _ = writeln!(s, "  {:>2} - {:<2} {} - {}", a, b, topo.joint_name(a), topo.joint_name(b));
    }
    let r_max = part.radius as isize;
    for r in -r_max..=r_max {
        let _ = writeln!(s, "A[{r:+}]:");
        let a = part.a_at(r);
        for i in 0..n {
            let row: String = (0..n).map(|j| if a[i * n + j] != 0.0 { '1' } else { '.' }).collect();
            let _ = writeln!(s, "  {row}");
        }
        let _ = writeln!(s, "B[{r:+}]:");
        let b = part.b_at(r);
        for i in 0..n {
            let _ = write!(s, " ");
            for j in 0..n {
                let _ = write!(s, " {:.4}", b[i * n + j]);
            }
            let _ = writeln!(s);
        }
    }
    s
}
