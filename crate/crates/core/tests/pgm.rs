use hdfnet::io::{read_pgm, write_pgm, GrayImage};
use hdfnet::reference::pgm_header;
use hdfnet::Error;
use proptest::prelude::*;

fn image() -> impl Strategy<Value = GrayImage> {
    (1usize..=40, 1usize..=40).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<u8>(), w * h)
            .prop_map(move |px| GrayImage::new(w, h, px).unwrap())
    })
}

/// Whitespace runs, optionally holding comments that end in a newline.
fn separator() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        prop_oneof![
            Just(" ".to_string()),
            Just("\t".to_string()),
            Just("\n".to_string()),
            "[a-zA-Z0-9 #]{0,12}".prop_map(|c| format!("\n#{c}\n")),
        ],
        1..4,
    )
    .prop_map(|parts| parts.concat())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn write_read_round_trip(img in image()) {
        let bytes = write_pgm(&img);
        let back = read_pgm(&bytes).unwrap();
        prop_assert_eq!(&back, &img);
        prop_assert_eq!(write_pgm(&back), bytes);
    }
}

proptest! {
    #[test]
    fn commented_header_matches_naive_tokenizer(
        img in image(),
        seps in proptest::collection::vec(separator(), 3),
        last in prop_oneof![Just(b' '), Just(b'\n'), Just(b'\t')],
    ) {
        let mut bytes = format!(
            "P5{}{}{}{}{}255",
            seps[0], img.width(), seps[1], img.height(), seps[2]
        )
        .into_bytes();
        bytes.push(last);
        bytes.extend_from_slice(img.pixels());
        let parsed = read_pgm(&bytes).unwrap();
        let (magic, w, h, maxval, offset) = pgm_header(&bytes).unwrap();
        prop_assert_eq!(magic, "P5");
        prop_assert_eq!((w, h, maxval), (parsed.width(), parsed.height(), 255));
        prop_assert_eq!(&bytes[offset..offset + w * h], parsed.pixels());
        prop_assert_eq!(&parsed, &img);
    }

    #[test]
    fn truncation_is_rejected(img in image(), cut in 1usize..=1600) {
        let bytes = write_pgm(&img);
        let keep = bytes.len().saturating_sub(cut.min(img.pixels().len()));
        let truncated = matches!(read_pgm(&bytes[..keep]), Err(Error::Pgm { .. }));
        prop_assert!(truncated);
    }
}

#[test]
fn non_255_maxvals_are_rejected() {
    for maxval in [1, 15, 254, 256, 65535] {
        let mut bytes = format!("P5 1 1 {maxval}\n").into_bytes();
        bytes.extend([0, 0]);
        let err = read_pgm(&bytes).unwrap_err();
        assert!(matches!(err, Error::Pgm { offset: 7, .. }), "{err}");
    }
}

#[test]
fn ascii_pgm_is_rejected() {
    let err = read_pgm(b"P2\n1 1\n255\n0\n").unwrap_err();
    assert!(err.to_string().contains("byte 0"), "{err}");
}
