use std::path::{Path, PathBuf};

use gsfl::data::{encode_idx_labels, load_idx, parse_idx_images, parse_idx_labels};
use gsfl::{Error, IdxError};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn golden_fixture_loads_scaled_pixels() {
    let data = load_idx(fixture("golden-images.idx3-ubyte"), fixture("golden-labels.idx1-ubyte")).unwrap();
    assert_eq!((data.len(), data.dim()), (3, 16));
    assert_eq!(data.labels(), &[3, 0, 7]);
    assert_eq!(data.num_classes(), 8);
    let f = data.features();
    assert_eq!(f.row(0)[1], 17.0 / 255.0);
    assert_eq!(f.row(0)[15], 1.0);
    assert_eq!(&f.row(1)[..4], &[1.0, 0.0, 1.0, 0.0]);
    assert_eq!(f.row(2)[15], 16.0 / 255.0);
}

#[test]
fn malformed_headers_are_distinguished() {
    let images = std::fs::read(fixture("golden-images.idx3-ubyte")).unwrap();
    let labels = std::fs::read(fixture("golden-labels.idx1-ubyte")).unwrap();
    assert!(matches!(
        parse_idx_labels(&images),
        Err(IdxError::BadMagic { expected: 0x801, found: 0x803 })
    ));
    assert!(matches!(parse_idx_images(&labels), Err(IdxError::BadMagic { .. })));
    assert!(matches!(parse_idx_images(&images[..10]), Err(IdxError::Truncated { .. })));
    assert!(matches!(parse_idx_labels(&labels[..9]), Err(IdxError::Truncated { .. })));
}

#[test]
fn load_errors_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("four-labels");
    std::fs::write(&labels, encode_idx_labels(&[1, 2, 3, 4])).unwrap();
    let err = load_idx(fixture("golden-images.idx3-ubyte"), &labels).unwrap_err();
    assert!(matches!(err, Error::Idx { source: IdxError::CountMismatch { images: 3, labels: 4 }, .. }));
    let missing = dir.path().join("absent");
    let err = load_idx(&missing, &labels).unwrap_err();
    assert!(err.to_string().contains("absent"));
    assert!(err.is_user_error());
}
