use std::path::{Path, PathBuf};

use super::io::load_tensor;
use super::SceneCube;
use crate::error::{Error, Result};

/// `key=value` dataset description. Relative paths resolve against the
/// manifest's directory; `#` starts a comment.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub hsi: PathBuf,
    pub lidar: PathBuf,
    pub labels: PathBuf,
    pub classes: usize,
}

impl Manifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let (mut hsi, mut lidar, mut labels, mut classes) = (None, None, None, None);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("manifest line {}: expected key=value", n + 1)))?;
            let value = value.trim();
            let slot = match key.trim() {
                "hsi" => &mut hsi,
                "lidar" => &mut lidar,
                "labels" => &mut labels,
                "classes" => {
                    classes = Some(
                        value
                            .parse::<usize>()
                            .map_err(|_| Error::invalid(format!("manifest line {}: classes = {value:?}", n + 1)))?,
                    );
                    continue;
                }
                other => {
                    return Err(Error::invalid(format!(
                        "manifest line {}: unknown key {other:?}",
                        n + 1
                    )))
                }
            };
            *slot = Some(base.join(value));
        }
        let need = |v: Option<PathBuf>, k: &str| v.ok_or_else(|| Error::invalid(format!("manifest is missing {k}")));
        let classes = classes.ok_or_else(|| Error::invalid("manifest is missing classes"))?;
        if classes == 0 {
            return Err(Error::invalid("manifest declares zero classes"));
        }
        Ok(Manifest {
            hsi: need(hsi, "hsi")?,
            lidar: need(lidar, "lidar")?,
            labels: need(labels, "labels")?,
            classes,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Manifest::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

pub fn load_scene(manifest: &Path) -> Result<SceneCube> {
    let m = Manifest::load(manifest)?;
    SceneCube::new(
        load_tensor(&m.hsi)?,
        load_tensor(&m.lidar)?,
        &load_tensor(&m.labels)?,
        m.classes,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::io::save_tensor;
    use crate::tensor::Tensor;

    #[test]
    fn parse_resolves_relative_paths() {
        let m = Manifest::parse(
            "# scene\nhsi = a.a3t\nlidar=b.a3t\nlabels=/abs/c.a3t\nclasses=4\n",
            Path::new("/d"),
        )
        .unwrap();
        assert_eq!(m.hsi, PathBuf::from("/d/a.a3t"));
        assert_eq!(m.labels, PathBuf::from("/abs/c.a3t"));
        assert_eq!(m.classes, 4);
    }

    #[test]
    fn parse_rejects_unknown_and_missing() {
        assert!(Manifest::parse("hsi=a\nlidar=b\nlabels=c\nclasses=2\ncolor=red", Path::new(".")).is_err());
        assert!(Manifest::parse("hsi=a\nlidar=b\nclasses=2", Path::new(".")).is_err());
        assert!(Manifest::parse("hsi=a\nlidar=b\nlabels=c\nclasses=x", Path::new(".")).is_err());
    }

    #[test]
    fn loads_scene_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        save_tensor(dir.path().join("h.a3t"), &Tensor::from_fn(&[3, 2, 4], |i| i as f64)).unwrap();
        save_tensor(dir.path().join("l.a3t"), &Tensor::zeros(&[3, 2])).unwrap();
        save_tensor(
            dir.path().join("y.a3t"),
            &Tensor::new(vec![3, 2], vec![0.0, 1.0, 2.0, 0.0, 1.0, 1.0]).unwrap(),
        )
        .unwrap();
        let path = dir.path().join("scene.txt");
        std::fs::write(&path, "hsi=h.a3t\nlidar=l.a3t\nlabels=y.a3t\nclasses=2\n").unwrap();
        let scene = load_scene(&path).unwrap();
        assert_eq!(scene.lidar.shape(), &[3, 2, 1]);
        assert_eq!(scene.labels, vec![0, 1, 2, 0, 1, 1]);
        assert!(load_scene(&dir.path().join("nope.txt")).is_err());
    }
}
