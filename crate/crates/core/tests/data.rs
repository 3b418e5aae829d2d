use proptest::prelude::*;

use sinet_core::data::{
    boltzmann_average, boltzmann_weights, read_csv, write_csv, ColumnMap, Conformer, Dataset, DatasetProvenance,
    MoleculeRecord, BOLTZMANN_EV_PER_K,
};
use sinet_core::SinetError;

fn conformers(pairs: &[(f64, f64)]) -> Vec<Conformer> {
    pairs
        .iter()
        .map(|&(homo_ev, rel_energy_ev)| Conformer { homo_ev, rel_energy_ev })
        .collect()
}

fn arith_mean(c: &[Conformer]) -> f64 {
    c.iter().map(|c| c.homo_ev).sum::<f64>() / c.len() as f64
}

#[test]
fn low_temperature_selects_the_lowest_energy_conformer() {
    let c = conformers(&[(-5.31, 0.12), (-5.02, 0.0), (-4.87, 0.05), (-5.6, 0.3)]);
    assert!((boltzmann_average(&c, 1e-6).unwrap() - (-5.02)).abs() <= 1e-9);
    let shifted = conformers(&[(-5.31, 1.12), (-5.02, 1.0), (-4.87, 1.05)]);
    assert!((boltzmann_average(&shifted, 1e-6).unwrap() - (-5.02)).abs() <= 1e-9);
}

#[test]
fn high_temperature_approaches_the_plain_mean() {
    let c = conformers(&[(-5.31, 0.0), (-5.02, 4e-5), (-4.87, 1e-4), (-5.6, 7e-5)]);
    let avg = boltzmann_average(&c, 1e9).unwrap();
    assert!((avg - arith_mean(&c)).abs() <= 1e-9, "{}", avg - arith_mean(&c));
}

#[test]
fn high_temperature_deviation_is_first_order_in_one_over_kt() {
    // mean(h) - cov(h, E)/kT to first order
    let c = conformers(&[(-5.31, 0.12), (-5.02, 0.0), (-4.87, 0.05), (-5.6, 0.3)]);
    let kt = BOLTZMANN_EV_PER_K * 1e9;
    let n = c.len() as f64;
    let mh = arith_mean(&c);
    let me = c.iter().map(|c| c.rel_energy_ev).sum::<f64>() / n;
    let cov = c.iter().map(|c| (c.homo_ev - mh) * (c.rel_energy_ev - me)).sum::<f64>() / n;
    let avg = boltzmann_average(&c, 1e9).unwrap();
    assert!((avg - (mh - cov / kt)).abs() <= 1e-12);
}

#[test]
fn weights_are_normalised_and_shift_invariant() {
    let e = [0.3, 0.0, 0.1, 0.05];
    let w = boltzmann_weights(&e, 298.15).unwrap();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    assert!(w[1] > w[3] && w[3] > w[2] && w[2] > w[0]);
    let kt = BOLTZMANN_EV_PER_K * 298.15;
    assert!((w[0] / w[1] - (-0.3 / kt).exp()).abs() < 1e-12);
    let shifted: Vec<f64> = e.iter().map(|v| v + 7.0).collect();
    let w2 = boltzmann_weights(&shifted, 298.15).unwrap();
    for (a, b) in w.iter().zip(&w2) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn boltzmann_rejects_bad_inputs() {
    assert!(boltzmann_weights(&[], 300.0).is_err());
    assert!(boltzmann_weights(&[0.0], 0.0).is_err());
    assert!(boltzmann_weights(&[0.0], -1.0).is_err());
    assert!(boltzmann_weights(&[f64::NAN], 300.0).is_err());
}

fn record_strategy() -> impl Strategy<Value = MoleculeRecord> {
    (
        "[CNO]{1,10}",
        "[CHNO0-9]{1,8}",
        -8.0f64..-3.0,
        prop::option::of(prop::collection::vec((-8.0f64..-3.0, 0.0f64..0.5), 1..4)),
    )
        .prop_map(|(smiles, formula, homo, conf)| MoleculeRecord {
            id: String::new(),
            smiles,
            inchi: format!("InChI=1S/{formula}"),
            homo_ev: homo,
            conformers: conf.map(|v| conformers(&v)),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn csv_round_trip_is_exact(records in prop::collection::vec(record_strategy(), 1..12)) {
        let records: Vec<MoleculeRecord> = records
            .into_iter()
            .enumerate()
            .map(|(i, mut r)| { r.id = format!("m,{i}"); r })
            .collect();
        let ds = Dataset::new("p", DatasetProvenance::Source, records).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = read_csv(&buf[..], "p", DatasetProvenance::Source, &ColumnMap::default()).unwrap();
        prop_assert_eq!(back.records, ds.records);
    }
}

#[test]
fn missing_column_and_bad_number_are_data_errors() {
    let no_inchi = "id,smiles,homo_ev\na,CC,-5.0\n";
    let err = read_csv(no_inchi.as_bytes(), "x", DatasetProvenance::Source, &ColumnMap::default()).unwrap_err();
    assert!(matches!(err, SinetError::Data(_)));
    assert_eq!(err.exit_code(), 3);

    let bad = "id,smiles,inchi,homo_ev\na,CC,InChI=1S/C2H6,-5.0\nb,CO,InChI=1S/CH4O,oops\n";
    let err = read_csv(bad.as_bytes(), "x", DatasetProvenance::Source, &ColumnMap::default()).unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");
}

#[test]
fn duplicate_ids_are_reported_with_lines() {
    let dup = "id,smiles,inchi,homo_ev\na,CC,InChI=1S/C2H6,-5.0\nb,CO,InChI=1S/CH4O,-5.1\na,C,InChI=1S/CH4,-5.2\n";
    let err = read_csv(dup.as_bytes(), "x", DatasetProvenance::Source, &ColumnMap::default()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("lines 2 and 4"), "{msg}");
}

#[test]
fn blank_homo_uses_conformer_average() {
    let text = "id,smiles,inchi,homo_ev,conf_homo_ev,conf_rel_e\na,CC,InChI=1S/C2H6,,-5.0;-6.0,0.0;0.0\n";
    let ds = read_csv(text.as_bytes(), "x", DatasetProvenance::Source, &ColumnMap::default()).unwrap();
    assert!((ds.records[0].homo_ev - (-5.5)).abs() < 1e-15);
}
