use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use illumtree::features::{gray_world, load_image, CameraProfile, Rect};
use illumtree::Error;

fn write_png16(path: &Path, w: u32, h: u32, samples: &[u16], color: png::ColorType) {
    let mut enc = png::Encoder::new(BufWriter::new(File::create(path).unwrap()), w, h);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut writer = enc.write_header().unwrap();
    let bytes: Vec<u8> = samples.iter().flat_map(|s| s.to_be_bytes()).collect();
    writer.write_image_data(&bytes).unwrap();
}

fn synthetic_planes(w: usize, h: usize) -> Vec<u16> {
    (0..w * h)
        .flat_map(|i| {
            let (x, y) = ((i % w) as u32, (i / w) as u32);
            [
                (x * 4099 + y * 13) as u16,
                (y * 2111 + 7) as u16,
                ((x * y * 577) % 60000) as u16,
            ]
        })
        .collect()
}

#[test]
fn sixteen_bit_png_matches_second_decoder() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("planes.png");
    let (w, h) = (13, 9);
    write_png16(&path, w as u32, h as u32, &synthetic_planes(w, h), png::ColorType::Rgb);

    let profile = CameraProfile::new("linear16", 0.0, 65535.0).unwrap();
    let ours = load_image(&path, &profile, &[]).unwrap();
    let theirs = image::open(&path).unwrap().into_rgb16();
    assert_eq!((ours.width(), ours.height()), (w, h));
    for (x, y, px) in theirs.enumerate_pixels() {
        let expect = px.0.map(|v| v as f64 / 65535.0);
        assert_eq!(ours.pixel(x as usize, y as usize), expect, "pixel ({x}, {y})");
    }
}

#[test]
fn rgba_alpha_is_ignored_and_black_level_subtracted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("alpha.png");
    let samples: Vec<u16> = vec![2048 + 1000, 2048 + 2000, 2048 + 3000, 17, 2048, 2048, 2048, 65535];
    write_png16(&path, 2, 1, &samples, png::ColorType::Rgba);
    let profile = CameraProfile::new("canon", 2048.0, 15000.0).unwrap();
    let img = load_image(&path, &profile, &[]).unwrap();
    let span = 15000.0 - 2048.0;
    assert_eq!(img.pixel(0, 0), [1000.0 / span, 2000.0 / span, 3000.0 / span]);
    assert_eq!(img.pixel(1, 0), [0.0, 0.0, 0.0]);
}

#[test]
fn eight_bit_png_matches_second_decoder() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eight.png");
    let (w, h) = (6u32, 5u32);
    let buf = image::RgbImage::from_fn(w, h, |x, y| image::Rgb([(x * 40) as u8, (y * 50 + 3) as u8, 200]));
    buf.save(&path).unwrap();
    let profile = CameraProfile::new("srgb-linear", 0.0, 255.0).unwrap();
    let ours = load_image(&path, &profile, &[]).unwrap();
    for (x, y, px) in buf.enumerate_pixels() {
        assert_eq!(ours.pixel(x as usize, y as usize), px.0.map(|v| v as f64 / 255.0));
    }
}

#[test]
fn ppm_p6_sixteen_bit_with_comment() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.ppm");
    let mut f = File::create(&path).unwrap();
    f.write_all(b"P6\n# linear capture\n2 1\n65535\n").unwrap();
    for v in [100u16, 200, 300, 65535, 0, 0] {
        f.write_all(&v.to_be_bytes()).unwrap();
    }
    drop(f);
    let profile = CameraProfile::new("p", 0.0, 65535.0).unwrap();
    let img = load_image(&path, &profile, &[]).unwrap();
    // The second pixel has a channel at saturation and is masked out.
    assert_eq!(img.usable_count(), 1);
    let (r, g) = gray_world(&img).unwrap();
    assert!((r - 1.0 / 6.0).abs() < 1e-15 && (g - 2.0 / 6.0).abs() < 1e-15);
}

#[test]
fn fully_saturated_or_masked_images_are_empty() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sat.png");
    write_png16(&path, 2, 2, &[4000; 12], png::ColorType::Rgb);
    let profile = CameraProfile::new("p", 0.0, 4000.0).unwrap();
    assert!(matches!(load_image(&path, &profile, &[]), Err(Error::EmptyImage)));

    let lower = CameraProfile::new("p", 0.0, 5000.0).unwrap();
    let all = Rect { x: 0, y: 0, w: 2, h: 2 };
    assert!(matches!(load_image(&path, &lower, &[all]), Err(Error::EmptyImage)));
    assert_eq!(load_image(&path, &lower, &[Rect { x: 1, y: 0, w: 1, h: 2 }]).unwrap().usable_count(), 2);
}

#[test]
fn unsupported_inputs_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let text = dir.path().join("notes.png");
    std::fs::write(&text, b"not an image").unwrap();
    let profile = CameraProfile::new("p", 0.0, 255.0).unwrap();
    assert!(load_image(&text, &profile, &[]).is_err());
    assert!(matches!(load_image(dir.path().join("missing.png"), &profile, &[]), Err(Error::Io(_))));

    let gray = dir.path().join("gray.png");
    image::GrayImage::from_pixel(2, 2, image::Luma([9])).save(&gray).unwrap();
    assert!(load_image(&gray, &profile, &[]).is_err());
}
