use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use icosnet::data::*;
use icosnet::mesh::*;
use ndarray::Array2;
use proptest::prelude::*;

fn subset_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset")
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("icosnet-data-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn bundled_subset_loads() {
    let train = load_mnist_split(&subset_dir(), MnistSplit::Train).unwrap();
    let test = load_mnist_split(&subset_dir(), MnistSplit::Test).unwrap();
    assert_eq!((train.len(), test.len()), (5000, 1000));
    for d in train.iter().chain(&test) {
        assert_eq!(d.pixels.dim(), (28, 28));
        assert!(d.label <= 9);
        assert!(d.pixels.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }
    for class in 0..10 {
        assert!(train.iter().filter(|d| d.label == class).count() > 300);
    }
}

fn idx_images(n: u32, rows: u32, cols: u32, px: &[u8]) -> Vec<u8> {
    let mut b = Vec::new();
    for w in [0x803, n, rows, cols] {
        b.extend_from_slice(&u32::to_be_bytes(w));
    }
    b.extend_from_slice(px);
    b
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(&0x801u32.to_be_bytes());
    b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    b.extend_from_slice(labels);
    b
}

#[test]
fn idx_plain_and_gzip_agree() {
    let dir = scratch("idx");
    let px: Vec<u8> = (0..2 * 3 * 4).map(|i| (i * 10) as u8).collect();
    std::fs::write(dir.join("a-images"), idx_images(2, 3, 4, &px)).unwrap();
    std::fs::write(dir.join("a-labels"), idx_labels(&[3, 7])).unwrap();
    let mut gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
    gz.write_all(&idx_images(2, 3, 4, &px)).unwrap();
    std::fs::write(dir.join("b-images.gz"), gz.finish().unwrap()).unwrap();

    let plain = load_idx(&dir.join("a-images"), &dir.join("a-labels")).unwrap();
    let zipped = load_idx(&dir.join("b-images.gz"), &dir.join("a-labels")).unwrap();
    assert_eq!(plain, zipped);
    assert_eq!(plain[1].label, 7);
    assert_eq!(plain[0].pixels[[0, 1]], 10.0 / 255.0);
    assert_eq!(plain[1].pixels[[2, 3]], 230.0 / 255.0);
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn idx_corruption_is_reported() {
    let dir = scratch("bad");
    let mut bad = idx_images(1, 2, 2, &[0; 4]);
    bad[3] = 0x01;
    std::fs::write(dir.join("img"), &bad).unwrap();
    std::fs::write(dir.join("short"), &idx_images(2, 2, 2, &[0; 5])).unwrap();
    std::fs::write(dir.join("ok"), idx_images(1, 2, 2, &[0; 4])).unwrap();
    std::fs::write(dir.join("lab"), idx_labels(&[1])).unwrap();
    std::fs::write(dir.join("lab2"), idx_labels(&[1, 2])).unwrap();
    for (img, lab) in [("img", "lab"), ("short", "lab2"), ("ok", "lab2"), ("ok", "missing")] {
        let err = load_idx(&dir.join(img), &dir.join(lab)).unwrap_err().to_string();
        assert!(!err.is_empty());
    }
    let err = load_idx(&dir.join("img"), &dir.join("lab")).unwrap_err().to_string();
    assert!(err.contains("img"), "{err}");
    std::fs::remove_dir_all(dir).ok();
}

/// Independent patch mapping: unit-square coordinates of `(lon, lat)` in the patch.
fn patch_uv(lon: f64, lat: f64, lon0: f64, delta: f64) -> Option<(f64, f64)> {
    let dl = (lon - lon0).sin().atan2((lon - lon0).cos());
    if dl.abs() > delta + 1e-12 || lat.abs() > delta + 1e-12 {
        return None;
    }
    Some(((dl + delta) / (2.0 * delta), (delta - lat) / (2.0 * delta)))
}

#[test]
fn all_ones_image_marks_the_patch() {
    let mesh = mesh_at_level(5).unwrap();
    let spec = ProjectionSpec::default();
    let s = project_digit(Array2::ones((28, 28)).view(), &spec, &mesh);
    let mut inside = 0;
    for (v, &p) in mesh.vertices().iter().enumerate() {
        let (lon, lat) = lon_lat(p);
        match patch_uv(lon, lat, 0.0, PI / 6.0) {
            Some(_) => {
                inside += 1;
                assert!((s[v] - 1.0).abs() < 1e-12);
            }
            None => assert_eq!(s[v], 0.0),
        }
    }
    // the patch covers 2Δ · 2 sin Δ of the sphere's 4π
    let frac = inside as f64 / mesh.n_vertices() as f64;
    let expect = (PI / 3.0) * 2.0 * (PI / 6.0).sin() / (4.0 * PI);
    assert!((frac - expect).abs() / expect < 0.1, "{frac} vs {expect}");
}

#[test]
fn rotating_by_a_fifth_turn_permutes_vertices() {
    // a 72° turn about the pole axis maps the icosphere onto itself
    let mesh = mesh_at_level(4).unwrap();
    let digit = Array2::from_shape_fn((28, 28), |(r, c)| ((r * 31 + c * 17) % 29) as f64 / 29.0);
    let a = ProjectionSpec::from_degrees(10.0, 30.0).unwrap();
    let b = ProjectionSpec::from_degrees(82.0, 30.0).unwrap();
    let sa = project_digit(digit.view(), &a, &mesh);
    let sb = project_digit(digit.view(), &b, &mesh);
    let (s, c) = (72f64.to_radians().sin(), 72f64.to_radians().cos());
    for (v, &p) in mesh.vertices().iter().enumerate() {
        let q = [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]];
        let w = (0..mesh.n_vertices())
            .min_by(|&i, &j| norm(sub(mesh.vertices()[i], q)).total_cmp(&norm(sub(mesh.vertices()[j], q))))
            .unwrap();
        assert!(norm(sub(mesh.vertices()[w], q)) < 1e-9);
        assert!((sb[w] - sa[v]).abs() < 1e-9, "vertex {v} -> {w}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn projection_matches_independent_mapping(lon0_deg in -180.0f64..180.0, delta_deg in 5.0f64..60.0) {
        // a ramp along columns is reproduced exactly by bilinear interpolation
        let mesh = mesh_at_level(4).unwrap();
        let spec = ProjectionSpec::from_degrees(lon0_deg, delta_deg).unwrap();
        let img = Array2::from_shape_fn((20, 28), |(r, c)| c as f64 + 100.0 * r as f64);
        let s = project_digit(img.view(), &spec, &mesh);
        for (v, &p) in mesh.vertices().iter().enumerate() {
            let (lon, lat) = lon_lat(p);
            match patch_uv(lon, lat, spec.lon0(), spec.delta()) {
                Some((u, t)) => {
                    let col = (u * 28.0 - 0.5).clamp(0.0, 27.0);
                    let row = (t * 20.0 - 0.5).clamp(0.0, 19.0);
                    prop_assert!((s[v] - (col + 100.0 * row)).abs() < 1e-6, "{} vs {}", s[v], col + 100.0 * row);
                }
                None => prop_assert_eq!(s[v], 0.0),
            }
        }
        prop_assert_eq!(s[NORTH_POLE], 0.0);
        prop_assert_eq!(s[SOUTH_POLE], 0.0);
    }

    #[test]
    fn located_faces_contain_the_direction(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
        prop_assume!(x * x + y * y + z * z > 1e-6);
        let loc = FaceLocator::new(4).unwrap();
        let d = normalize([x, y, z]);
        let (f, bary) = loc.locate(d);
        prop_assert!(bary.iter().all(|&b| b >= -1e-9));
        prop_assert!((bary.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let tri = loc.mesh().faces()[f];
        let mut p = [0.0; 3];
        for k in 0..3 {
            p = add(p, scale(loc.mesh().vertices()[tri[k] as usize], bary[k]));
        }
        prop_assert!(norm(sub(normalize(p), d)) < 1e-9);
    }

    #[test]
    fn nearest_sampling_returns_pixel_values(seed in any::<u64>()) {
        let mesh = mesh_at_level(2).unwrap();
        let data: Vec<f64> = (0..16 * 8).map(|i| ((i as u64).wrapping_mul(seed | 1) % 97) as f64).collect();
        let img = EquirectImage::new(16, 8, 1, data.clone()).unwrap();
        let s = sample_equirect(&img, &mesh, SampleMode::Nearest);
        prop_assert!(s.iter().all(|v| data.contains(v)));
    }
}

#[test]
fn bilinear_sampling_of_smooth_fields() {
    let mesh = mesh_at_level(5).unwrap();
    let (w, h) = (512, 256);
    // continuous across the seam, so seam vertices must see no jump
    let img = EquirectImage::from_fn(w, h, |lon, lat| lon.cos() * lat.cos() + lat.sin()).unwrap();
    let s = sample_equirect(&img, &mesh, SampleMode::Bilinear);
    let pixel = 2.0 * PI / w as f64;
    for (v, &p) in mesh.vertices().iter().enumerate() {
        let (lon, lat) = lon_lat(p);
        let exact = lon.cos() * lat.cos() + lat.sin();
        let tol = if lat.abs() > PI / 2.0 - PI / h as f64 { 2.0 * pixel } else { pixel * pixel };
        assert!((s[[0, v]] - exact).abs() < tol, "vertex {v} lon {lon}");
    }
}

#[test]
fn render_after_sample_reproduces_harmonic() {
    let mesh = mesh_at_level(5).unwrap();
    let f = |lon: f64, lat: f64| 0.5 * lat.sin() + lat.cos() * (lon.cos() + 0.3 * lon.sin()) + 0.2 * (3.0 * lat.sin().powi(2) - 1.0);
    let img = EquirectImage::from_fn(512, 256, f).unwrap();
    let s = sample_equirect(&img, &mesh, SampleMode::Bilinear);
    let back = render_equirect(s.row(0).as_slice().unwrap(), &mesh, 512, 256).unwrap();
    let mut worst: f64 = 0.0;
    for r in 0..256 {
        for c in 0..512 {
            let (lon, lat) = pixel_center(512, 256, r, c);
            worst = worst.max((back.get(r, c, 0) - f(lon, lat)).abs());
        }
    }
    assert!(worst <= 0.05, "{worst}");
}

#[test]
fn label_rendering_uses_palette() {
    let mesh = mesh_at_level(2).unwrap();
    let labels: Vec<usize> = (0..mesh.n_vertices()).map(|v| v % 3).collect();
    let img = render_equirect_labels(&labels, &mesh, 64, 32).unwrap();
    assert_eq!(img.channels(), 3);
    let palette: Vec<[f64; 3]> = (0..3).map(label_color).collect();
    for r in 0..32 {
        for c in 0..64 {
            let px = [img.get(r, c, 0), img.get(r, c, 1), img.get(r, c, 2)];
            assert!(palette.contains(&px));
        }
    }
}

#[test]
fn synthetic_sets_cover_all_classes_and_are_seeded() {
    for classes in 2..=4 {
        let d = synth_segmentation_set(3, classes, 32, 5).unwrap();
        assert_eq!(d.channels(), SYNTH_CHANNELS);
        assert!(d.class_frequencies().iter().all(|&f| f > 0.0), "{classes}");
    }
    let a = synth_segmentation_set(2, 3, 4, 1).unwrap();
    let b = synth_segmentation_set(2, 3, 4, 1).unwrap();
    let c = synth_segmentation_set(2, 3, 4, 2).unwrap();
    assert_eq!(a.samples(), b.samples());
    assert_ne!(a.samples(), c.samples());
}

#[test]
fn manifest_round_trip() {
    let dir = scratch("manifest");
    let digits = load_mnist_split(&subset_dir(), MnistSplit::Test).unwrap();
    let mnist = spherical_mnist(&digits[..5], 3, &ProjectionSpec::default()).unwrap();
    assert_eq!((mnist.len(), mnist.channels(), mnist.level()), (5, 1, 3));
    let path = write_dataset(&mnist, &dir, "digits").unwrap();
    assert_eq!(read_manifest(&path, 10).unwrap().samples(), mnist.samples());

    let seg = synth_segmentation_set(2, 3, 3, 0).unwrap();
    let path = write_dataset(&seg, &dir, "seg").unwrap();
    let back = read_manifest(&path, 3).unwrap();
    assert!(back.is_per_vertex());
    assert_eq!(back.samples(), seg.samples());
    std::fs::remove_dir_all(dir).ok();
}
