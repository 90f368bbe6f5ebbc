//! Labeled scenes: per-face semantic and instance labels, object queries and
//! a lazily built signed distance grid.

mod labels;
mod vocabulary;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

pub use labels::{FaceLabel, LabelFile};
pub use vocabulary::{Vocabulary, CATEGORY_COUNT, DEFAULT_CATEGORIES};

use crate::error::{Error, Result};
use crate::geometry::io::read_mesh;
use crate::geometry::{
    build_sdf_grid, compute_aabb, sample_surface_points, Aabb, Bvh, SdfConfig, SdfGrid,
    TriangleMesh, Vec3,
};

/// One object instance of a scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneObject {
    pub instance_id: u32,
    pub category_id: u32,
    pub category: String,
    pub faces: Vec<usize>,
    pub aabb: Aabb,
}

#[derive(Debug)]
pub struct Scene {
    pub mesh: TriangleMesh,
    pub labels: Vec<FaceLabel>,
    pub categories: BTreeMap<u32, String>,
    pub up: Vec3,
    sdf_config: SdfConfig,
    sdf: OnceLock<SdfGrid>,
    bvh: OnceLock<Bvh>,
}

impl Scene {
    /// Validates labels against the mesh.
    pub fn new(
        mesh: TriangleMesh,
        labels: Vec<FaceLabel>,
        categories: BTreeMap<u32, String>,
    ) -> Result<Self> {
        mesh.validate()?;
        if labels.len() != mesh.faces.len() {
            return Err(Error::LabelCountMismatch {
                labels: labels.len(),
                faces: mesh.faces.len(),
            });
        }
        let mut instance_category: BTreeMap<u32, u32> = BTreeMap::new();
        for (face, l) in labels.iter().enumerate() {
            if !categories.contains_key(&l.category) {
                return Err(Error::UnknownCategory {
                    face,
                    category: l.category,
                });
            }
            let first = *instance_category.entry(l.instance).or_insert(l.category);
            if first != l.category {
                return Err(Error::InconsistentInstance {
                    instance: l.instance,
                    first,
                    second: l.category,
                });
            }
        }
        Ok(Scene {
            mesh,
            labels,
            categories,
            up: Vec3::z(),
            sdf_config: SdfConfig::default(),
            sdf: OnceLock::new(),
            bvh: OnceLock::new(),
        })
    }

    pub fn from_label_file(mesh: TriangleMesh, labels: LabelFile) -> Result<Self> {
        Scene::new(mesh, labels.faces, labels.categories)
    }

    pub fn label_file(&self) -> LabelFile {
        LabelFile {
            categories: self.categories.clone(),
            faces: self.labels.clone(),
        }
    }

    pub fn with_sdf_config(mut self, config: SdfConfig) -> Self {
        self.sdf_config = config;
        self.sdf = OnceLock::new();
        self
    }

    pub fn sdf_config(&self) -> &SdfConfig {
        &self.sdf_config
    }

    /// The scene SDF, built on first use.
    pub fn sdf(&self) -> Result<&SdfGrid> {
        if let Some(g) = self.sdf.get() {
            return Ok(g);
        }
        let grid = build_sdf_grid(&self.mesh, &self.sdf_config)?;
        Ok(self.sdf.get_or_init(|| grid))
    }

    /// Installs a precomputed grid (e.g. from a cache file).
    pub fn set_sdf(&self, grid: SdfGrid) -> bool {
        self.sdf.set(grid).is_ok()
    }

    pub fn bvh(&self) -> &Bvh {
        self.bvh.get_or_init(|| Bvh::new(&self.mesh))
    }

    /// Category id for a name, if the scene uses it.
    pub fn category_id(&self, name: &str) -> Option<u32> {
        self.categories
            .iter()
            .find(|(_, n)| n.as_str() == name)
            .map(|(&id, _)| id)
    }

    /// Every instance, sorted by instance id.
    pub fn objects(&self) -> Vec<SceneObject> {
        let mut faces: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (f, l) in self.labels.iter().enumerate() {
            faces.entry(l.instance).or_default().push(f);
        }
        faces
            .into_iter()
            .map(|(instance_id, faces)| {
                let category_id = self.labels[faces[0]].category;
                SceneObject {
                    instance_id,
                    category_id,
                    category: self.categories[&category_id].clone(),
                    aabb: compute_aabb(&self.mesh, Some(&faces)).expect("instance has faces"),
                    faces,
                }
            })
            .collect()
    }

    /// Instances of a category, sorted by instance id. Unknown names yield an
    /// empty list and a warning naming the known categories.
    pub fn query_objects(&self, category: &str) -> Vec<SceneObject> {
        let Some(id) = self.category_id(category) else {
            let known: Vec<&str> = self.categories.values().map(String::as_str).collect();
            log::warn!(
                "category `{category}` is not in this scene; known categories: {}",
                known.join(", ")
            );
            return Vec::new();
        };
        self.objects()
            .into_iter()
            .filter(|o| o.category_id == id)
            .collect()
    }

    pub fn object_points(&self, obj: &SceneObject, count: usize, seed: u64) -> Result<Vec<Vec3>> {
        sample_surface_points(&self.mesh, Some(&obj.faces), count, seed)
    }
}

pub fn load_scene(mesh_path: &Path, labels_path: &Path) -> Result<Scene> {
    let mesh = read_mesh(mesh_path)?;
    let labels = LabelFile::load(labels_path)?;
    Scene::from_label_file(mesh, labels)
}
