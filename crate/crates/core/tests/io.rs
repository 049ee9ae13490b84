mod common;

use common::*;
use mapsurrogate::benchfn::{campbell2d_ensemble, Campbell2dSpec};
use mapsurrogate::design::{lhs_maximin, SaConfig};
use mapsurrogate::grid::{load_ensemble, read_grid_file, save_ensemble, write_pgm, MapFormat};
use mapsurrogate::Error;

#[test]
fn three_small_csv_maps_load() {
    let dir = tempfile::tempdir().unwrap();
    let design = dir.path().join("design.csv");
    std::fs::write(&design, "x1,x2,x3\n0.1,0.2,0.3\n0.4,0.5,0.6\n0.7,0.8,0.9\n").unwrap();
    let maps = dir.path().join("maps");
    std::fs::create_dir(&maps).unwrap();
    for i in 0..3 {
        let rows: Vec<String> = (0..4).map(|r| (0..4).map(|c| format!("{}", i * 100 + r * 4 + c)).collect::<Vec<_>>().join(",")).collect();
        std::fs::write(maps.join(format!("{i:05}.csv")), rows.join("\n") + "\n").unwrap();
    }
    let ens = load_ensemble(&design, &maps, &toy_grid(4), &[(0.0, 1.0); 3]).unwrap();
    assert_eq!(ens.len(), 3);
    assert_eq!(ens.outputs()[2].get(1, 2), 206.0);
    assert_eq!(ens.input_row(1), vec![0.4, 0.5, 0.6]);
}

#[test]
fn nan_design_row_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let design = dir.path().join("design.csv");
    std::fs::write(&design, "0.1,0.2,0.3\n0.4,NaN,0.6\n").unwrap();
    let err = load_ensemble(&design, dir.path(), &toy_grid(4), &[(0.0, 1.0); 3]).unwrap_err();
    assert!(matches!(err, Error::DesignRow { row: 1, .. }), "{err}");
}

#[test]
fn missing_map_names_its_index() {
    let dir = tempfile::tempdir().unwrap();
    let ens = toy_ensemble(4, 4, 0);
    let design = dir.path().join("design.csv");
    save_ensemble(&ens, &design, &dir.path().join("maps"), MapFormat::Grid).unwrap();
    std::fs::remove_file(dir.path().join("maps/00002.grid")).unwrap();
    let err = load_ensemble(&design, &dir.path().join("maps"), &toy_grid(4), &[(0.0, 1.0); 3]).unwrap_err();
    assert!(matches!(err, Error::Map { index: 2, .. }), "{err}");
}

#[test]
fn wrong_map_shape_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ens = toy_ensemble(3, 8, 0);
    let design = dir.path().join("design.csv");
    save_ensemble(&ens, &design, &dir.path().join("maps"), MapFormat::Csv).unwrap();
    assert!(load_ensemble(&design, &dir.path().join("maps"), &toy_grid(4), &[(0.0, 1.0); 3]).is_err());
}

#[test]
fn campbell_fixture_round_trips_both_formats() {
    let spec = Campbell2dSpec::default();
    let cfg = SaConfig { stall_factor: 1, max_proposals: 2000, ..SaConfig::default() };
    let x = lhs_maximin(200, 8, 1, &cfg).unwrap().scaled(&spec.bounds).unwrap();
    let ens = campbell2d_ensemble(&x, &spec).unwrap();
    for format in [MapFormat::Grid, MapFormat::Csv] {
        let dir = tempfile::tempdir().unwrap();
        let design = dir.path().join("design.csv");
        save_ensemble(&ens, &design, &dir.path().join("maps"), format).unwrap();
        let back = load_ensemble(&design, &dir.path().join("maps"), &spec.grid().unwrap(), &spec.bounds).unwrap();
        assert_eq!(back.len(), 200);
        assert_eq!(back.inputs(), ens.inputs());
        for (a, b) in back.outputs().iter().zip(ens.outputs()) {
            assert_eq!(a, b);
        }
    }
}

#[test]
fn grid_files_reject_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.grid");
    mapsurrogate::grid::write_grid_file(&p, 2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    assert_eq!(read_grid_file(&p).unwrap(), (2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(read_grid_file(&p), Err(Error::GridFormat { .. })));
}

#[test]
fn pgm_spans_the_gray_range() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.pgm");
    let (lo, hi) = write_pgm(&p, 2, 2, &[-1.0, 0.0, 1.0, f64::NAN]).unwrap();
    assert_eq!((lo, hi), (-1.0, 1.0));
    let bytes = std::fs::read(&p).unwrap();
    assert!(bytes.starts_with(b"P5\n2 2\n255\n"));
    assert_eq!(&bytes[bytes.len() - 4..], &[0, 128, 255, 0]);
}
