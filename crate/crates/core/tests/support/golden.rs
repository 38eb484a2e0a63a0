//! Golden files under `tests/golden`. `QUERYTRACK_BLESS=1` rewrites them.

use std::path::PathBuf;

use querytrack::io::{read_detections, to_jsonl, DetectionRecord, TrackRecord};
use querytrack::sim::{scenario_suite, simulate, Suite};

fn dir(sub: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join(sub)
}

fn bless() -> bool {
    std::env::var_os("QUERYTRACK_BLESS").is_some_and(|v| v == "1")
}

pub fn check(name: &str, actual: &str) {
    let path = dir("golden").join(name);
    if bless() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| {
        panic!(
            "{}: {e} (run with QUERYTRACK_BLESS=1 to create)",
            path.display()
        )
    });
    assert!(
        expected == actual,
        "{} differs from the golden file",
        path.display()
    );
}

/// Detections and ground truth of the saved occlusion fixture.
pub fn fixture() -> (Vec<DetectionRecord>, Vec<TrackRecord>) {
    let det = dir("fixtures").join("occlusion.detections.jsonl");
    let gt = dir("fixtures").join("occlusion.gt.jsonl");
    if bless() {
        let config = scenario_suite(Suite::Occlusion, 1, 11).unwrap().remove(0);
        let sim = simulate(&config, 11).unwrap();
        std::fs::create_dir_all(det.parent().unwrap()).unwrap();
        std::fs::write(&det, to_jsonl(&sim.detections)).unwrap();
        std::fs::write(&gt, to_jsonl(&sim.gt)).unwrap();
    }
    (
        read_detections(&det).unwrap(),
        querytrack::io::read_jsonl(&gt).unwrap(),
    )
}
