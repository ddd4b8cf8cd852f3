mod common;

use common::{interface_deviation, operator_deviation, source_deviation, unit_base_mesh};
use sdlab::assembly::PhysParams;
use sdlab::mesh::{BcConfig, DomainSpec, Mesh};

#[test]
fn operator_matches_quadrature_oracle_on_unit_base_mesh() {
    let params = PhysParams::new(2.5, 0.3, 0.7).unwrap();
    for nref in 0..2 {
        let d = operator_deviation(&unit_base_mesh(DomainSpec::stacked(), nref, BcConfig::NN), params);
        assert!(d <= 1e-12, "nref {nref}: {d:e}");
    }
}

#[test]
fn operator_matches_oracle_side_by_side_and_inclusion() {
    let params = PhysParams::new(0.4, 3.0, 1.0).unwrap();
    let d = operator_deviation(&unit_base_mesh(DomainSpec::side_by_side(), 1, BcConfig::EN), params);
    assert!(d <= 1e-12, "{d:e}");
    let mesh = Mesh::build(&DomainSpec::channel(1), 0, BcConfig::MultiInclusion).unwrap();
    let d = operator_deviation(&mesh, params);
    assert!(d <= 1e-12, "{d:e}");
}

#[test]
fn mms_sources_match_finite_differences() {
    for (mu, k, alpha) in [(3.0, 1.0, 0.5), (1.0, 1e-2, 1.0), (0.2, 7.0, 0.3)] {
        let d = source_deviation(PhysParams::new(mu, k, alpha).unwrap());
        assert!(d <= 1e-6, "mu={mu} K={k}: {d:e}");
    }
}

#[test]
fn interface_data_match_finite_differences() {
    for (mu, k, alpha) in [(3.0, 1.0, 0.5), (0.5, 4.0, 1.2)] {
        let d = interface_deviation(PhysParams::new(mu, k, alpha).unwrap());
        assert!(d <= 1e-6, "{d:e}");
    }
}
