//! Desk-scale synthetic radiology reports.
//!
//! Every report states its laterality ("left"/"right") in the background
//! and the impression but never in the findings, so a summarizer that reads
//! only the findings can recover the laterality no better than chance.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{tokenize, Report};

pub const LATERALITIES: [&str; 2] = ["left", "right"];

struct BodyPart {
    name: &'static str,
    bones: [&'static str; 2],
}

const BODY_PARTS: [BodyPart; 8] = [
    BodyPart { name: "ankle", bones: ["distal fibula", "medial malleolus"] },
    BodyPart { name: "knee", bones: ["patella", "tibial plateau"] },
    BodyPart { name: "wrist", bones: ["distal radius", "scaphoid"] },
    BodyPart { name: "elbow", bones: ["radial head", "olecranon"] },
    BodyPart { name: "shoulder", bones: ["humeral head", "glenoid"] },
    BodyPart { name: "hand", bones: ["fifth metacarpal", "proximal phalanx"] },
    BodyPart { name: "foot", bones: ["fifth metatarsal", "calcaneus"] },
    BodyPart { name: "hip", bones: ["femoral neck", "acetabulum"] },
];

const FILLERS: [&str; 5] = [
    "no radiopaque foreign body is seen .",
    "the visualized soft tissues are unremarkable .",
    "no periosteal reaction is seen .",
    "vascular calcifications are present .",
    "no suspicious osseous lesion .",
];

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs[rng.gen_range(0..xs.len())]
}

/// `n` reports, deterministic in `seed`.
pub fn generate_synthetic_corpus(n: usize, seed: u64) -> Vec<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| synthetic_report(&mut rng, i)).collect()
}

fn synthetic_report(rng: &mut ChaCha8Rng, index: usize) -> Report {
    let part = &BODY_PARTS[rng.gen_range(0..BODY_PARTS.len())];
    let p = part.name;
    let lat = LATERALITIES[usize::from(rng.gen_bool(0.5))];

    let views = pick(rng, &["two", "three", "four"]);
    let complaint = pick(rng, &["pain", "pain after fall", "injury", "swelling", "trauma"]);
    let background = match rng.gen_range(0..3) {
        0 => format!("{views} views of the {lat} {p} . history : {lat} {p} {complaint} ."),
        1 => format!("history : {complaint} . exam : {lat} {p} , {views} views ."),
        _ => format!(
            "exam : {lat} {p} radiographs . indication : {complaint} . comparison : none ."
        ),
    };

    let (mut key, mut rest, impression): (Vec<String>, Vec<String>, String) =
        match rng.gen_range(0..5) {
            0 => (
                vec!["there is normal mineralization and alignment .".into()],
                vec![
                    "no fracture or osseous lesion is identified .".into(),
                    format!("the {p} joint spaces are maintained ."),
                    "the soft tissues are normal .".into(),
                ],
                format!("normal {lat} {p} radiographs ."),
            ),
            1 => {
                let disp = pick(rng, &["nondisplaced", "minimally displaced", "comminuted"]);
                let bone = part.bones[rng.gen_range(0..2)];
                (
                    vec![format!("there is a {disp} fracture of the {bone} .")],
                    vec![
                        "alignment is otherwise anatomic .".into(),
                        format!("the {p} joint spaces are preserved ."),
                        "there is overlying soft tissue swelling .".into(),
                    ],
                    format!("{disp} fracture of the {lat} {bone} ."),
                )
            }
            2 => {
                let size = pick(rng, &["small", "moderate", "large"]);
                (
                    vec![format!("there is a {size} {p} joint effusion .")],
                    vec![
                        "no fracture or dislocation is seen .".into(),
                        "bone mineralization is normal .".into(),
                    ],
                    format!("{size} {lat} {p} joint effusion . no fracture ."),
                )
            }
            3 => {
                let sev = pick(rng, &["mild", "moderate", "severe"]);
                (
                    vec![format!("there is {sev} joint space narrowing of the {p} .")],
                    vec![
                        format!("{sev} osteophyte formation is present ."),
                        "no acute fracture is identified .".into(),
                    ],
                    format!("{sev} degenerative changes of the {lat} {p} ."),
                )
            }
            _ => (
                vec![format!("there is soft tissue swelling about the {p} .")],
                vec![
                    "no fracture or dislocation is identified .".into(),
                    "the joint spaces are maintained .".into(),
                ],
                format!("soft tissue swelling of the {lat} {p} without fracture ."),
            ),
        };
    for _ in 0..rng.gen_range(0..3) {
        let f = pick(rng, &FILLERS).to_string();
        if !rest.contains(&f) {
            rest.push(f);
        }
    }
    rest.shuffle(rng);
    key.append(&mut rest);
    let findings = key.join(" ");

    Report {
        id: format!("syn-{index:05}"),
        body_part: p.to_string(),
        background: tokenize(&background),
        findings: tokenize(&findings),
        impression: tokenize(&impression),
    }
}

/// The laterality token of a synthetic report, read from its background.
pub fn laterality(r: &Report) -> Option<&str> {
    r.background
        .iter()
        .find(|t| LATERALITIES.contains(&t.as_str()))
        .map(String::as_str)
}
