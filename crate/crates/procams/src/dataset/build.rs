use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gen::{generate_setup_sized, Difficulty};
use super::source::{augmented, load_source_images, procedural_image};
use super::DatasetError;
use crate::imaging::{png_quantized, read_png, resample_bilinear, write_png, Raster};
use crate::photometric::SurfacePriorSet;
use crate::sim::{build_render_cache, render_capture_cached, SetupConfig, PRIOR_LEVELS};

/// Scale knobs for one dataset build.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BuildConfig {
    pub n_setups: usize,
    pub train: usize,
    pub val: usize,
    /// Held-out images rendered at `test_resolution` on the rescaled scene.
    pub test: usize,
    /// Camera and projector frame side for train/val rendering.
    pub resolution: usize,
    /// Frame side for the test split (scale generalization).
    pub test_resolution: usize,
    pub seed: u64,
}

impl Default for BuildConfig {
    /// Desk-scale defaults: minutes of total runtime.
    fn default() -> Self {
        Self {
            n_setups: 12,
            train: 50,
            val: 20,
            test: 5,
            resolution: 256,
            test_resolution: 600,
            seed: 7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (expected train|val|test)")),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SetupEntry {
    pub setup_id: String,
    pub difficulty: Difficulty,
    pub seed: u64,
    /// Relative path of the scene description JSON.
    pub setup: String,
    /// Relative paths of the gray-probe captures, in `prior_levels` order.
    pub priors: Vec<String>,
    pub prior_levels: Vec<u8>,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub resolution: usize,
    pub test_resolution: usize,
    pub setups: Vec<SetupEntry>,
    #[serde(skip)]
    root: PathBuf,
}

impl DatasetManifest {
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry(&self, setup_id: &str) -> Option<&SetupEntry> {
        self.setups.iter().find(|e| e.setup_id == setup_id)
    }

    /// Directory holding one setup's files.
    pub fn setup_dir(&self, entry: &SetupEntry) -> PathBuf {
        self.root
            .join(&entry.setup)
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| self.root.clone())
    }

    pub fn load_setup(&self, entry: &SetupEntry) -> Result<SetupConfig, DatasetError> {
        Ok(SetupConfig::load(&self.root.join(&entry.setup))?)
    }

    /// The scene a given split's pairs were rendered with: train/val use the
    /// base scene, test the rescaled one stored next to its images.
    pub fn load_split_setup(
        &self,
        entry: &SetupEntry,
        split: Split,
    ) -> Result<SetupConfig, DatasetError> {
        match split {
            Split::Train | Split::Val => self.load_setup(entry),
            Split::Test => Ok(SetupConfig::load(
                &self.setup_dir(entry).join("test").join("setup.json"),
            )?),
        }
    }

    fn serialize_pretty(&self) -> Result<String, DatasetError> {
        serde_json::to_string_pretty(self).map_err(|e| DatasetError::Manifest {
            context: "serialize".into(),
            message: e.to_string(),
        })
    }
}

/// Provides projection content: user PNGs (cycled with flip augmentation)
/// or the procedural families.
enum SourcePool {
    Procedural,
    Folder(Vec<PathBuf>),
}

impl SourcePool {
    fn image(&self, index: usize, w: usize, h: usize) -> Result<Raster, DatasetError> {
        match self {
            SourcePool::Procedural => Ok(procedural_image(index, w, h)),
            SourcePool::Folder(paths) => {
                let base = read_png(&paths[index % paths.len()])?.to_rgb();
                let resized = resample_bilinear(&base, w, h)?;
                Ok(png_quantized(&augmented(&resized, index / paths.len()))?)
            }
        }
    }
}

fn write_split_pairs(
    dir: &Path,
    split: &str,
    count: usize,
    index_base: usize,
    pool: &SourcePool,
    setup: &SetupConfig,
) -> Result<(), DatasetError> {
    if count == 0 {
        return Ok(());
    }
    let prj = dir.join(split).join("prj");
    let cam = dir.join(split).join("cam");
    std::fs::create_dir_all(&prj).map_err(|e| DatasetError::io(prj.display(), e))?;
    std::fs::create_dir_all(&cam).map_err(|e| DatasetError::io(cam.display(), e))?;
    let cache = build_render_cache(setup)?;
    let (pw, ph) = setup.projector_size;
    for j in 0..count {
        let x = pool.image(index_base + j, pw, ph)?;
        let x_tilde = render_capture_cached(&x, setup, &cache, setup.noise_sigma > 0.0)?;
        write_png(&x, &prj.join(format!("{j:03}.png")))?;
        write_png(&x_tilde, &cam.join(format!("{j:03}.png")))?;
    }
    Ok(())
}

/// Generate scenes and render the full pair tree under `out`:
/// `out/<setup_id>/{setup.json, reflectance.png, prior_*.png,
/// {train,val,test}/{prj,cam}/NNN.png}` plus `out/manifest.json`.
/// Fully deterministic in the config; the same call produces a
/// byte-identical tree.
pub fn build_dataset(
    config: &BuildConfig,
    source_images: Option<&Path>,
    out: &Path,
) -> Result<DatasetManifest, DatasetError> {
    if config.n_setups == 0 || config.train == 0 || config.val == 0 {
        return Err(DatasetError::BadInput {
            what: "need at least one setup, one training pair, and one validation pair".into(),
        });
    }
    if config.resolution < 16 || (config.test > 0 && config.test_resolution < 16) {
        return Err(DatasetError::BadInput {
            what: "resolutions below 16 px are not renderable".into(),
        });
    }
    let pool = match source_images {
        None => SourcePool::Procedural,
        Some(dir) => {
            let paths = load_source_images(dir)?;
            if paths.is_empty() {
                return Err(DatasetError::BadInput {
                    what: format!("no PNG files under {}", dir.display()),
                });
            }
            SourcePool::Folder(paths)
        }
    };
    std::fs::create_dir_all(out).map_err(|e| DatasetError::io(out.display(), e))?;

    let mut seed_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let seeds: Vec<u64> = (0..config.n_setups).map(|_| seed_rng.next_u64()).collect();
    let res = (config.resolution, config.resolution);
    let tres = (config.test_resolution, config.test_resolution);

    let entries: Result<Vec<SetupEntry>, DatasetError> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let setup_id = format!("setup_{i:03}");
            let difficulty = Difficulty::ALL[i % Difficulty::ALL.len()];
            let setup = generate_setup_sized(seed, difficulty, res, res);
            let dir = out.join(&setup_id);
            setup.save(&dir)?;

            let cache = build_render_cache(&setup)?;
            let (pw, ph) = setup.projector_size;
            let mut priors = Vec::with_capacity(PRIOR_LEVELS.len());
            for &level in &PRIOR_LEVELS {
                let drive = Raster::constant(pw, ph, 3, level as f32 / 255.0)?;
                let cap = render_capture_cached(&drive, &setup, &cache, setup.noise_sigma > 0.0)?;
                let name = format!("prior_{level:03}.png");
                write_png(&cap, &dir.join(&name))?;
                priors.push(format!("{setup_id}/{name}"));
            }

            write_split_pairs(&dir, "train", config.train, 0, &pool, &setup)?;
            write_split_pairs(&dir, "val", config.val, config.train, &pool, &setup)?;
            if config.test > 0 {
                setup.rescaled(tres, tres)?.save(&dir.join("test"))?;
                // Render with the reloaded copy: rescaling moves reflectance
                // off the 8-bit grid, and the stored scene is the contract.
                let test_setup = SetupConfig::load(&dir.join("test").join("setup.json"))?;
                write_split_pairs(
                    &dir,
                    "test",
                    config.test,
                    config.train + config.val,
                    &pool,
                    &test_setup,
                )?;
            }

            Ok(SetupEntry {
                setup_id: setup_id.clone(),
                difficulty,
                seed,
                setup: format!("{setup_id}/setup.json"),
                priors,
                prior_levels: PRIOR_LEVELS.to_vec(),
                train: config.train,
                val: config.val,
                test: config.test,
            })
        })
        .collect();

    let manifest = DatasetManifest {
        version: 1,
        seed: config.seed,
        resolution: config.resolution,
        test_resolution: config.test_resolution,
        setups: entries?,
        root: out.to_path_buf(),
    };
    let json = manifest.serialize_pretty()?;
    std::fs::write(out.join("manifest.json"), json)
        .map_err(|e| DatasetError::io(out.join("manifest.json").display(), e))?;
    Ok(manifest)
}

/// Load and fully validate a manifest: canonical prior levels, positive
/// counts, and every referenced file present on disk.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DatasetError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| DatasetError::io(path.display(), e))?;
    let mut manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| DatasetError::Manifest {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
    manifest.root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));

    for entry in &manifest.setups {
        if entry.prior_levels != PRIOR_LEVELS {
            return Err(DatasetError::Manifest {
                context: entry.setup_id.clone(),
                message: format!(
                    "prior levels {:?} are not the canonical {:?}",
                    entry.prior_levels, PRIOR_LEVELS
                ),
            });
        }
        if entry.train == 0 || entry.val == 0 {
            return Err(DatasetError::Manifest {
                context: entry.setup_id.clone(),
                message: "train and val counts must be at least 1".into(),
            });
        }
        let mut required: Vec<PathBuf> = vec![manifest.root.join(&entry.setup)];
        required.extend(entry.priors.iter().map(|p| manifest.root.join(p)));
        let dir = manifest.setup_dir(entry);
        for (split, count) in [
            ("train", entry.train),
            ("val", entry.val),
            ("test", entry.test),
        ] {
            for j in 0..count {
                required.push(dir.join(split).join("prj").join(format!("{j:03}.png")));
                required.push(dir.join(split).join("cam").join(format!("{j:03}.png")));
            }
        }
        if entry.test > 0 {
            required.push(dir.join("test").join("setup.json"));
        }
        for p in required {
            if !p.is_file() {
                return Err(DatasetError::MissingFile {
                    path: p.display().to_string(),
                });
            }
        }
    }
    Ok(manifest)
}

/// One rendered pair plus the setup's gray-probe captures: the projector
/// input, its capture, and the probe set (train/val at base resolution;
/// test pairs at the test resolution with base-resolution probes).
pub fn load_pair(
    manifest: &DatasetManifest,
    setup_id: &str,
    split: Split,
    index: usize,
) -> Result<(Raster, Raster, SurfacePriorSet), DatasetError> {
    let entry = manifest
        .entry(setup_id)
        .ok_or_else(|| DatasetError::UnknownSetup(setup_id.to_string()))?;
    let count = match split {
        Split::Train => entry.train,
        Split::Val => entry.val,
        Split::Test => entry.test,
    };
    if index >= count {
        return Err(DatasetError::OutOfRange {
            setup_id: setup_id.to_string(),
            split: split.as_str().to_string(),
            index,
            count,
        });
    }
    let dir = manifest.setup_dir(entry);
    let read = |p: PathBuf| -> Result<Raster, DatasetError> {
        if !p.is_file() {
            return Err(DatasetError::MissingFile {
                path: p.display().to_string(),
            });
        }
        Ok(read_png(&p)?)
    };
    let x = read(
        dir.join(split.as_str())
            .join("prj")
            .join(format!("{index:03}.png")),
    )?;
    let x_tilde = read(
        dir.join(split.as_str())
            .join("cam")
            .join(format!("{index:03}.png")),
    )?;
    let mut priors = Vec::with_capacity(entry.priors.len());
    for rel in &entry.priors {
        priors.push(read(manifest.root.join(rel))?);
    }
    let prior_set = SurfacePriorSet::new(entry.prior_levels.clone(), priors)?;
    Ok((x, x_tilde, prior_set))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::render_capture;

    fn tiny_config() -> BuildConfig {
        BuildConfig {
            n_setups: 1,
            train: 2,
            val: 1,
            test: 1,
            resolution: 32,
            test_resolution: 48,
            seed: 3,
        }
    }

    fn walk_files(root: &Path) -> Vec<PathBuf> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in std::fs::read_dir(&dir).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push(p.strip_prefix(root).unwrap().to_path_buf());
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn tiny_build_writes_the_expected_tree() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = build_dataset(&tiny_config(), None, dir.path()).unwrap();
        assert_eq!(manifest.setups.len(), 1);
        let expected = [
            "manifest.json",
            "setup_000/setup.json",
            "setup_000/reflectance.png",
            "setup_000/prior_000.png",
            "setup_000/prior_064.png",
            "setup_000/prior_128.png",
            "setup_000/prior_191.png",
            "setup_000/prior_255.png",
            "setup_000/train/prj/000.png",
            "setup_000/train/prj/001.png",
            "setup_000/train/cam/000.png",
            "setup_000/train/cam/001.png",
            "setup_000/val/prj/000.png",
            "setup_000/val/cam/000.png",
            "setup_000/test/setup.json",
            "setup_000/test/reflectance.png",
            "setup_000/test/prj/000.png",
            "setup_000/test/cam/000.png",
        ];
        let got = walk_files(dir.path());
        let mut want: Vec<PathBuf> = expected.iter().map(PathBuf::from).collect();
        want.sort();
        assert_eq!(got, want);
        // 5 probes + 2x2 train + 1x2 val pair images, as counted from config.
        let pair_pngs = got
            .iter()
            .filter(|p| {
                let s = p.to_string_lossy();
                s.contains("prior_") || s.contains("train/") || s.contains("val/")
            })
            .count();
        assert_eq!(pair_pngs, 5 + 2 * 2 + 2);
    }

    #[test]
    fn manifest_reloads_and_reserializes_identically() {
        let dir = tempfile::tempdir().unwrap();
        build_dataset(&tiny_config(), None, dir.path()).unwrap();
        let path = dir.path().join("manifest.json");
        let bytes = std::fs::read(&path).unwrap();
        let loaded = load_manifest(&path).unwrap();
        assert_eq!(loaded.serialize_pretty().unwrap().as_bytes(), &bytes[..]);
        assert_eq!(loaded.root(), dir.path());
    }

    #[test]
    fn stored_captures_match_a_rerender_of_the_stored_scene() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = build_dataset(&tiny_config(), None, dir.path()).unwrap();
        let entry = &manifest.setups[0];
        let setup = manifest.load_setup(entry).unwrap();

        let (x, x_tilde, priors) = load_pair(&manifest, "setup_000", Split::Train, 1).unwrap();
        assert_eq!(x.dims(), (32, 32));
        let rerendered =
            png_quantized(&render_capture(&x, &setup, setup.noise_sigma > 0.0).unwrap()).unwrap();
        assert_eq!(x_tilde, rerendered);

        // Probe captures re-render identically too (seeded noise).
        let re_prior = png_quantized(
            &render_capture(
                &Raster::constant(32, 32, 3, 64.0 / 255.0).unwrap(),
                &setup,
                setup.noise_sigma > 0.0,
            )
            .unwrap(),
        )
        .unwrap();
        assert_eq!(*priors.prior_at(64).unwrap(), re_prior);

        // Test pairs were rendered with the stored rescaled scene.
        let (tx, tx_tilde, _) = load_pair(&manifest, "setup_000", Split::Test, 0).unwrap();
        assert_eq!(tx.dims(), (48, 48));
        let tsetup = manifest.load_split_setup(entry, Split::Test).unwrap();
        let re_test =
            png_quantized(&render_capture(&tx, &tsetup, tsetup.noise_sigma > 0.0).unwrap())
                .unwrap();
        assert_eq!(tx_tilde, re_test);
    }

    #[test]
    fn bad_lookups_are_explicit_errors() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = build_dataset(&tiny_config(), None, dir.path()).unwrap();
        assert!(matches!(
            load_pair(&manifest, "setup_000", Split::Val, 1),
            Err(DatasetError::OutOfRange { count: 1, .. })
        ));
        assert!(matches!(
            load_pair(&manifest, "setup_xyz", Split::Train, 0),
            Err(DatasetError::UnknownSetup(_))
        ));
        assert!(matches!(
            build_dataset(
                &BuildConfig {
                    n_setups: 0,
                    ..tiny_config()
                },
                None,
                dir.path()
            ),
            Err(DatasetError::BadInput { .. })
        ));
    }

    #[test]
    fn missing_files_fail_the_manifest_load() {
        let dir = tempfile::tempdir().unwrap();
        build_dataset(&tiny_config(), None, dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("setup_000/val/cam/000.png")).unwrap();
        assert!(matches!(
            load_manifest(&dir.path().join("manifest.json")),
            Err(DatasetError::MissingFile { .. })
        ));
    }

    #[test]
    fn rebuilding_produces_a_byte_identical_tree() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = BuildConfig {
            n_setups: 2,
            ..tiny_config()
        };
        build_dataset(&cfg, None, a.path()).unwrap();
        build_dataset(&cfg, None, b.path()).unwrap();
        let fa = walk_files(a.path());
        let fb = walk_files(b.path());
        assert_eq!(fa, fb);
        for rel in &fa {
            let ba = std::fs::read(a.path().join(rel)).unwrap();
            let bb = std::fs::read(b.path().join(rel)).unwrap();
            assert_eq!(ba, bb, "{} differs between builds", rel.display());
        }
    }

    #[test]
    fn user_image_folders_cycle_with_flips() {
        let src = tempfile::tempdir().unwrap();
        for i in 0..2 {
            write_png(&procedural_image(i, 40, 40), &src.path().join(format!("s{i}.png")))
                .unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let cfg = BuildConfig {
            train: 3,
            val: 1,
            test: 0,
            ..tiny_config()
        };
        let manifest = build_dataset(&cfg, Some(src.path()), dir.path()).unwrap();
        let (x0, _, _) = load_pair(&manifest, "setup_000", Split::Train, 0).unwrap();
        let (x2, _, _) = load_pair(&manifest, "setup_000", Split::Train, 2).unwrap();
        // Index 2 cycles back to the first image, flipped horizontally.
        assert_eq!(x2, png_quantized(&augmented(&x0, 1)).unwrap());
    }
}
