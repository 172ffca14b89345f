use std::fs;
use std::path::{Path, PathBuf};

use olx_core::io::{
    self, DenseManifest, PlyCloud, InstanceEntry, ObjectManifest, DENSE_MANIFEST, OBJECT_MANIFEST,
};
use olx_core::{Error, Result};

use crate::Fixture;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixturePaths {
    pub data: PathBuf,
    pub predictions: PathBuf,
    pub expected_segmentation: PathBuf,
    /// Present for perfect-retrieval fixtures.
    pub expected_retrieval: Option<PathBuf>,
}

/// Half-open runs of consecutive indices.
fn ranges(indices: &[u32]) -> Vec<[u32; 2]> {
    let mut out: Vec<[u32; 2]> = Vec::new();
    for &i in indices {
        match out.last_mut() {
            Some(r) if r[1] == i => r[1] += 1,
            _ => out.push([i, i + 1]),
        }
    }
    out
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })
}

/// Writes the dataset under `out/data`, predictions under `out/predictions`
/// and the planted reports next to them.
pub fn write_fixture(fixture: &Fixture, out: &Path) -> Result<FixturePaths> {
    let data = out.join("data");
    let pred = out.join("predictions");
    mkdir(&data)?;
    mkdir(&pred)?;
    io::write_prompt_list(&data.join(io::PROMPT_FILE), &fixture.prompt)?;
    io::write_matrix(&data.join(io::EMBEDDINGS_FILE), &fixture.label_matrix)?;

    for s in &fixture.scenes {
        let name = s.scene.name();
        let sdir = data.join(name);
        mkdir(&sdir)?;
        io::save_ground_truth(&sdir, &s.scene)?;
        io::write_json(&sdir.join(io::QUERIES_FILE), &s.queries)?;
        io::write_matrix(&sdir.join(io::QUERY_EMBEDDINGS_FILE), &s.query_embeddings)?;

        let pdir = pred.join(name);
        mkdir(&pdir)?;
        let cloud = |points: &[[f64; 3]]| PlyCloud {
            points: points.to_vec(),
            instance_ids: None,
            colors: None,
        };
        io::write_ply(&pdir.join("dense.ply"), &cloud(&s.dense.points))?;
        io::write_matrix(&pdir.join("dense_features.olxt"), &s.dense.features)?;
        io::write_json(
            &pdir.join(DENSE_MANIFEST),
            &DenseManifest {
                points: "dense.ply".into(),
                features: "dense_features.olxt".into(),
                dim: s.dense.features.dim(),
            },
        )?;

        io::write_ply(&pdir.join("instances.ply"), &cloud(s.objects.points()))?;
        io::write_matrix(&pdir.join("instance_features.olxt"), s.objects.features())?;
        let instances = s
            .objects
            .instances()
            .iter()
            .map(|i| InstanceEntry {
                id: i.id,
                confidence: i.confidence,
                ranges: ranges(&i.indices),
                mask: None,
            })
            .collect();
        io::write_json(
            &pdir.join(OBJECT_MANIFEST),
            &ObjectManifest {
                points: "instances.ply".into(),
                features: "instance_features.olxt".into(),
                dim: s.objects.features().dim(),
                instances,
            },
        )?;
    }

    let expected_segmentation = out.join("expected_segmentation.json");
    io::write_json(&expected_segmentation, &fixture.expected)?;
    let expected_retrieval = match &fixture.expected_retrieval {
        Some(r) => {
            let p = out.join("expected_retrieval.json");
            io::write_json(&p, r)?;
            Some(p)
        }
        None => None,
    };
    io::write_json(&out.join("fixture.json"), &fixture.config)?;
    Ok(FixturePaths {
        data,
        predictions: pred,
        expected_segmentation,
        expected_retrieval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_runs() {
        assert_eq!(ranges(&[0, 1, 2, 5, 6, 9]), vec![[0, 3], [5, 7], [9, 10]]);
        assert!(ranges(&[]).is_empty());
    }
}
