use affect_core::snapshot::{template_classify, Rect, SnapshotRoi, TemplateParams};
use affect_core::Emotion;
use image::{Rgb, RgbImage};

const SKIN: Rgb<u8> = Rgb([200, 120, 90]);
const DARK: Rgb<u8> = Rgb([40, 20, 20]);

fn face_with_blobs(blobs: &[(u32, u32)]) -> RgbImage {
    let mut img = RgbImage::from_pixel(320, 240, SKIN);
    for &(bx, by) in blobs {
        for y in by..by + 3 {
            for x in bx..bx + 3 {
                img.put_pixel(x, y, DARK);
            }
        }
    }
    img
}

fn roi() -> SnapshotRoi {
    SnapshotRoi {
        face: Rect::new(0, 0, 320, 240),
        mouth: Rect::new(80, 120, 160, 60),
    }
}

fn classify(img: &RgbImage, roi: &SnapshotRoi) -> Option<Emotion> {
    template_classify(img, roi, &TemplateParams::default())
        .unwrap()
        .decision
}

#[test]
fn corner_dimples_read_as_a_smile() {
    // mouth anchors sit at (120, 150) and (200, 150); length threshold 20
    let img = face_with_blobs(&[(125, 160), (205, 160)]);
    let out = template_classify(&img, &roi(), &TemplateParams::default()).unwrap();
    assert_eq!(out.decision, Some(Emotion::Happiness));
    assert_eq!((out.verdict.left_hits, out.verdict.right_hits), (1, 1));
    assert!(out.segments.iter().all(|s| s.len() < 20));
}

#[test]
fn blank_mouth_abstains() {
    let img = face_with_blobs(&[]);
    let out = template_classify(&img, &roi(), &TemplateParams::default()).unwrap();
    assert_eq!(out.decision, None);
    assert_eq!(out.verdict.total, 0);
}

#[test]
fn one_sided_or_raised_marks_abstain() {
    assert_eq!(classify(&face_with_blobs(&[(125, 160)]), &roi()), None);
    assert_eq!(classify(&face_with_blobs(&[(205, 160)]), &roi()), None);
    // above both anchors
    assert_eq!(classify(&face_with_blobs(&[(125, 130), (205, 130)]), &roi()), None);
}

#[test]
fn mouth_region_elsewhere_abstains() {
    let img = face_with_blobs(&[(125, 160), (205, 160)]);
    let moved = SnapshotRoi {
        face: Rect::new(0, 0, 320, 240),
        mouth: Rect::new(80, 20, 160, 60),
    };
    assert_eq!(classify(&img, &moved), None);
}

#[test]
fn mouth_outside_the_image_is_an_error() {
    let img = face_with_blobs(&[]);
    let bad = SnapshotRoi {
        face: Rect::new(0, 0, 320, 240),
        mouth: Rect::new(280, 200, 80, 60),
    };
    assert!(template_classify(&img, &bad, &TemplateParams::default()).is_err());
}
