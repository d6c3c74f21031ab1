use schn_web::Scene;

#[test]
fn rasters_have_rgba_layout() {
    let s = Scene::new(3, 16).unwrap();
    assert_eq!(s.resolution(), 32);
    for raster in [s.input_rgba(), s.labels_rgba(), s.lowpass_rgba(4).unwrap()] {
        assert_eq!(raster.len(), 4 * 32 * 32);
        assert!(raster.chunks(4).all(|p| p[3] == 255));
    }
}

#[test]
fn zero_rotation_changes_nothing() {
    let s = Scene::new(5, 16).unwrap();
    assert_eq!(s.rotated_labels_rgba(0.0, 0.0, 0.0).unwrap(), s.labels_rgba());
    let spectral = s.rotated_input_rgba(0.0, 0.0, 0.0).unwrap();
    let plain = s.lowpass_rgba(16).unwrap();
    let diff = spectral.iter().zip(&plain).map(|(a, b)| (*a as i32 - *b as i32).abs()).max().unwrap();
    assert!(diff <= 1, "{diff}");
}

#[test]
fn rotation_moves_the_scene() {
    let s = Scene::new(5, 16).unwrap();
    assert_ne!(s.rotated_labels_rgba(0.0, 1.2, 0.0).unwrap(), s.labels_rgba());
}

#[test]
fn lowest_degree_is_a_constant_image() {
    let s = Scene::new(7, 16).unwrap();
    let raster = s.lowpass_rgba(1).unwrap();
    assert!(raster.chunks(4).all(|p| p == &raster[..4]));
}

#[test]
fn power_spectrum_covers_every_degree() {
    let s = Scene::new(9, 16).unwrap();
    let p = s.degree_power();
    assert_eq!(p.len(), 16);
    assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
    assert!(p[0] > p[15], "the mean color dominates");
}

#[test]
fn bad_input_is_reported() {
    assert!(Scene::new(1, 0).is_err());
    let s = Scene::new(1, 8).unwrap();
    assert!(s.rotated_input_rgba(0.0, 4.0, 0.0).is_err());
}
