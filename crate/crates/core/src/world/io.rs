use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::Scene;
use crate::error::{Error, Result};

/// Writes one scene per line as JSON.
pub fn write_scenes(path: &Path, scenes: &[Scene]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for scene in scenes {
        let line = serde_json::to_string(scene).map_err(|e| Error::Encoding(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads scenes written by [`write_scenes`]; blank lines are skipped.
pub fn read_scenes(path: &Path) -> Result<Vec<Scene>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut scenes = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let scene: Scene = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        scene.validate().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        scenes.push(scene);
    }
    Ok(scenes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::world::{generate_scene, generate_world, WorldConfig};

    #[test]
    fn round_trip_preserves_scenes_exactly() {
        let cfg = WorldConfig::default();
        let vocab = generate_world(&cfg, 3).unwrap();
        let mut rng = substream(3, "io");
        let scenes: Vec<Scene> = (0..5)
            .map(|_| generate_scene(&vocab, &cfg, &mut rng).unwrap())
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenes.jsonl");
        write_scenes(&path, &scenes).unwrap();
        assert_eq!(read_scenes(&path).unwrap(), scenes);
    }

    #[test]
    fn empty_file_reads_as_no_scenes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(read_scenes(&path).unwrap().is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let cfg = WorldConfig::default();
        let vocab = generate_world(&cfg, 3).unwrap();
        let mut rng = substream(3, "io");
        let scene = generate_scene(&vocab, &cfg, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let good = serde_json::to_string(&scene).unwrap();
        std::fs::write(&path, format!("{good}\n{{\"scene_id\": 3\n")).unwrap();
        match read_scenes(&path).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
