mod common;

use std::fs;

use coimg::manifest::{class_stats, image_digest, scan_dataset, DatasetManifest, DEFAULT_EXTENSIONS};
use coimg::Error;

#[test]
fn counts_and_ordering() {
    let dir = tempfile::tempdir().unwrap();
    common::write_corpus(dir.path(), &[("b", 3), ("a", 2)], 8, 8);
    // Nested files belong to their top-level class and sort by relative path.
    fs::create_dir_all(dir.path().join("a/zz")).unwrap();
    common::pattern(99, 4, 4).save(dir.path().join("a/zz/0.png")).unwrap();
    common::pattern(98, 4, 4).save(dir.path().join("a/Z.png")).unwrap();
    fs::write(dir.path().join("a/notes.txt"), "ignored").unwrap();

    let out = scan_dataset(dir.path(), DEFAULT_EXTENSIONS).unwrap();
    let m = out.manifest;
    assert!(out.unreadable.is_empty());
    assert_eq!(m.classes.iter().map(|c| c.name.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    let a: Vec<_> = m.classes[0].entries.iter().map(|e| e.relative_path.as_str()).collect();
    assert_eq!(a, ["a/Z.png", "a/img_00000.png", "a/img_00001.png", "a/zz/0.png"]);
    assert!(m.classes[0].entries.iter().enumerate().all(|(i, e)| e.index == i));
    assert_eq!(m.total_images(), 7);
}

#[test]
fn single_image() {
    let dir = tempfile::tempdir().unwrap();
    common::write_corpus(dir.path(), &[("only", 1)], 5, 3);
    let m = scan_dataset(dir.path(), DEFAULT_EXTENSIONS).unwrap().manifest;
    assert_eq!(m.classes.len(), 1);
    assert_eq!(m.classes[0].len(), 1);
    assert_eq!((m.classes[0].entries[0].width, m.classes[0].entries[0].height), (5, 3));
    let stats = class_stats::<f64>(&m);
    assert_eq!(stats[0].fraction, 1.0);
}

#[test]
fn corrupt_file_is_reported_and_excluded() {
    let dir = tempfile::tempdir().unwrap();
    common::write_corpus(dir.path(), &[("c", 9)], 8, 8);
    fs::write(dir.path().join("c/broken.png"), b"not a png at all").unwrap();
    let out = scan_dataset(dir.path(), DEFAULT_EXTENSIONS).unwrap();
    assert_eq!(out.manifest.total_images(), 9);
    assert_eq!(out.unreadable.len(), 1);
    assert_eq!(out.unreadable[0].path, "c/broken.png");
}

#[test]
fn empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(scan_dataset(dir.path(), DEFAULT_EXTENSIONS), Err(Error::EmptyDataset { .. })));
    fs::create_dir_all(dir.path().join("x")).unwrap();
    fs::write(dir.path().join("x/junk.png"), b"junk").unwrap();
    assert!(matches!(scan_dataset(dir.path(), DEFAULT_EXTENSIONS), Err(Error::EmptyDataset { .. })));
}

#[test]
fn missing_root() {
    let dir = tempfile::tempdir().unwrap();
    let err = scan_dataset(&dir.path().join("nope"), DEFAULT_EXTENSIONS).unwrap_err();
    assert!(matches!(err, Error::NotADirectory(_)));
}

#[test]
fn rescan_is_identical_and_digests_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    common::write_corpus(dir.path(), &[("p", 6), ("q", 4)], 9, 7);
    let first = scan_dataset(dir.path(), DEFAULT_EXTENSIONS).unwrap().manifest;
    let second = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| scan_dataset(dir.path(), DEFAULT_EXTENSIONS).unwrap().manifest);

    let strip = |m: &DatasetManifest| serde_json::to_string(&DatasetManifest { created_at: 0, ..m.clone() }).unwrap();
    assert_eq!(strip(&first), strip(&second));

    for class in &first.classes {
        for e in &class.entries {
            let img = first.load_image(e).unwrap();
            assert_eq!(image_digest(&img), e.content_digest);
        }
    }
}

#[test]
fn manifest_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    common::write_corpus(dir.path(), &[("a", 2), ("b", 1)], 4, 4);
    let m = scan_dataset(dir.path(), DEFAULT_EXTENSIONS).unwrap().manifest;
    let path = dir.path().join("manifest.json");
    m.save(&path).unwrap();
    assert_eq!(DatasetManifest::load(&path).unwrap(), m);
}

#[test]
fn digest_ignores_encoding() {
    let dir = tempfile::tempdir().unwrap();
    let img = common::pattern(3, 6, 6);
    fs::create_dir_all(dir.path().join("a")).unwrap();
    fs::create_dir_all(dir.path().join("b")).unwrap();
    img.save(dir.path().join("a/x.png")).unwrap();
    img.save(dir.path().join("b/x.bmp")).unwrap();
    let m = scan_dataset(dir.path(), DEFAULT_EXTENSIONS).unwrap().manifest;
    assert_eq!(m.classes[0].entries[0].content_digest, m.classes[1].entries[0].content_digest);
}
