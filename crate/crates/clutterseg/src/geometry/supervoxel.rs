//! Super-voxel construction: contraction of a k-NN graph under a combined
//! position/normal distance.

use nalgebra::{Point3, Vector3};

use crate::config::GeometryParams;
use crate::error::Result;
use crate::geometry::cloud::PointCloud;
use crate::geometry::knn::PointGrid;

/// Combined distance between two points with unit normals:
/// `alpha * |x_i - x_j| + beta * (1 - <n_i, n_j>)`.
pub fn pair_distance(
    x_i: &Point3<f64>,
    n_i: &Vector3<f64>,
    x_j: &Point3<f64>,
    n_j: &Vector3<f64>,
    alpha: f64,
    beta: f64,
) -> f64 {
    alpha * (x_i - x_j).norm() + beta * (1.0 - n_i.dot(n_j))
}

#[derive(Debug, Clone)]
pub struct SuperVoxel {
    pub id: u32,
    pub members: Vec<u32>,
    pub centroid: Point3<f64>,
    pub mean_normal: Vector3<f64>,
    /// Member count.
    pub weight: u32,
    /// Weight normalized over the scene; sums to 1.
    pub weight_normalized: f64,
}

#[derive(Debug, Clone)]
pub struct SuperVoxelSet {
    pub voxels: Vec<SuperVoxel>,
    /// Super-voxel id per cloud point.
    pub point_to_voxel: Vec<u32>,
}

impl SuperVoxelSet {
    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    /// Recompute centroid and mean normal of one voxel from the cloud.
    pub fn refresh_voxel(&mut self, id: u32, cloud: &PointCloud) {
        let sv = &mut self.voxels[id as usize];
        let mut c = Vector3::zeros();
        let mut n = Vector3::zeros();
        for &m in &sv.members {
            c += cloud.positions[m as usize].coords;
            n += cloud.normals[m as usize];
        }
        let inv = 1.0 / sv.members.len() as f64;
        sv.centroid = Point3::from(c * inv);
        sv.mean_normal = if n.norm() > 1e-12 {
            n.normalize()
        } else {
            Vector3::z()
        };
    }
}

struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, i: u32) -> u32 {
        let mut root = i;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        let mut cur = i;
        while self.parent[cur as usize] != root {
            let next = self.parent[cur as usize];
            self.parent[cur as usize] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra as usize].cmp(&self.rank[rb as usize]) {
            std::cmp::Ordering::Less => self.parent[ra as usize] = rb,
            std::cmp::Ordering::Greater => self.parent[rb as usize] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb as usize] = ra;
                self.rank[ra as usize] += 1;
            }
        }
    }
}

/// Contract every k-NN edge whose pair distance is at most `tau_merge`;
/// connected components become super-voxels. The cloud must carry normals.
pub fn build_supervoxels(cloud: &PointCloud, params: &GeometryParams) -> Result<SuperVoxelSet> {
    assert_eq!(
        cloud.normals.len(),
        cloud.len(),
        "cloud must have normals before super-voxel construction"
    );
    let n = cloud.len();
    let grid = PointGrid::build(&cloud.positions, params.voxel_size_m * 2.0);
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in grid.k_nearest(i, params.k_nn) {
            let d = pair_distance(
                &cloud.positions[i],
                &cloud.normals[i],
                &cloud.positions[j as usize],
                &cloud.normals[j as usize],
                params.alpha,
                params.beta,
            );
            if d <= params.tau_merge {
                uf.union(i as u32, j);
            }
        }
    }

    // Components in first-seen order so ids are deterministic.
    let mut root_to_id: std::collections::HashMap<u32, u32> = std::collections::HashMap::new();
    let mut members: Vec<Vec<u32>> = Vec::new();
    let mut point_to_voxel = vec![0u32; n];
    for i in 0..n as u32 {
        let root = uf.find(i);
        let id = *root_to_id.entry(root).or_insert_with(|| {
            members.push(Vec::new());
            (members.len() - 1) as u32
        });
        members[id as usize].push(i);
        point_to_voxel[i as usize] = id;
    }

    let total = n as f64;
    let voxels = members
        .into_iter()
        .enumerate()
        .map(|(id, members)| {
            let mut c = Vector3::zeros();
            let mut nm = Vector3::zeros();
            for &m in &members {
                c += cloud.positions[m as usize].coords;
                nm += cloud.normals[m as usize];
            }
            let inv = 1.0 / members.len() as f64;
            SuperVoxel {
                id: id as u32,
                weight: members.len() as u32,
                weight_normalized: members.len() as f64 / total,
                centroid: Point3::from(c * inv),
                mean_normal: if nm.norm() > 1e-12 {
                    nm.normalize()
                } else {
                    Vector3::z()
                },
                members,
            }
        })
        .collect();

    Ok(SuperVoxelSet {
        voxels,
        point_to_voxel,
    })
}
