//! Random well-formed rule files and a fixed set of malformed ones.

use homectx_core::eca::lexer::token_kinds;
use homectx_core::eca::parse_file;
use rand::seq::SliceRandom;
use rand::Rng;

const NAMES: [&str; 8] = ["Lamp", "Sensor_3", "Bed", "User_A", "Door_1", "Heater", "Clock", "Temperature_bedroom"];
const MEMBERS: [&str; 6] = ["CurrentValue", "state", "triggered", "level", "Angle", "ring"];

fn kw(rng: &mut impl Rng, word: &str) -> String {
    match rng.gen_range(0..3) {
        0 => word.to_ascii_lowercase(),
        1 => word.to_ascii_uppercase(),
        _ => word.to_string(),
    }
}

fn name(rng: &mut impl Rng) -> &'static str {
    NAMES.choose(rng).expect("non-empty")
}

fn dotted(rng: &mut impl Rng) -> String {
    format!("{}.{}", name(rng), MEMBERS.choose(rng).expect("non-empty"))
}

fn event(rng: &mut impl Rng) -> String {
    let parens = if rng.gen_bool(0.3) { "()" } else { "" };
    format!("{}{parens}", dotted(rng))
}

fn literal(rng: &mut impl Rng) -> String {
    match rng.gen_range(0..6) {
        0 => rng.gen_range(0..200).to_string(),
        1 => format!("{}.{}", rng.gen_range(0..100), rng.gen_range(1..10)),
        2 => format!("\"{}\"", ["on", "off", "relax", "a b"].choose(rng).expect("non-empty")),
        3 => {
            if rng.gen_bool(0.5) {
                "true".into()
            } else {
                "false".into()
            }
        }
        4 => format!("{}:{:02}", rng.gen_range(0..24), rng.gen_range(0..60)),
        _ => format!("-{}", rng.gen_range(1..50)),
    }
}

fn condition(rng: &mut impl Rng, depth: u32) -> String {
    let leaf = depth == 0 || rng.gen_bool(0.4);
    if leaf {
        let op = ["<", ">", "<=", ">=", "==", "!="].choose(rng).expect("non-empty");
        return match rng.gen_range(0..4) {
            0 => dotted(rng),
            _ => format!("{} {op} {}", dotted(rng), literal(rng)),
        };
    }
    match rng.gen_range(0..4) {
        0 => format!("!{}", condition(rng, depth - 1)),
        1 => format!("({})", condition(rng, depth - 1)),
        2 => format!("{} && {}", condition(rng, depth - 1), condition(rng, depth - 1)),
        _ => format!("{} || {}", condition(rng, depth - 1), condition(rng, depth - 1)),
    }
}

fn action(rng: &mut impl Rng) -> String {
    let args: Vec<String> = (0..rng.gen_range(0..3)).map(|_| literal(rng)).collect();
    let semi = if rng.gen_bool(0.7) { ";" } else { "" };
    format!(
        "<{}>.Svc_{}:{}({}){semi}",
        name(rng),
        rng.gen_range(1..4),
        ["Start", "Stop", "Play", "Send"].choose(rng).expect("non-empty"),
        args.join(", ")
    )
}

fn rule(rng: &mut impl Rng) -> String {
    let braced = rng.gen_bool(0.3);
    let mut out = format!("    {} {}", kw(rng, "When"), event(rng));
    if braced {
        out.push_str(" {");
    }
    if rng.gen_bool(0.6) {
        out.push_str(&format!("\n      {} {}", kw(rng, "If"), condition(rng, 3)));
    }
    out.push_str(&format!("\n      {} {}", kw(rng, "THEN"), kw(rng, "DO")));
    for _ in 0..rng.gen_range(1..4) {
        out.push_str(&format!("\n        {}", action(rng)));
    }
    if braced {
        out.push_str("\n    }");
    }
    out.push('\n');
    out
}

fn rule_set(rng: &mut impl Rng) -> String {
    let mut head = kw(rng, "rules");
    if rng.gen_bool(0.8) {
        let targets: Vec<String> = (0..rng.gen_range(1..4))
            .map(|_| {
                let star = if rng.gen_bool(0.2) { "*" } else { "" };
                if rng.gen_bool(0.7) {
                    format!("<{}{star}>", name(rng))
                } else {
                    format!("{}{star}", name(rng))
                }
            })
            .collect();
        head.push_str(&format!(" {} {}", kw(rng, "for"), targets.join(", ")));
    }
    match rng.gen_range(0..4) {
        0 => head.push_str(&format!(" {}", kw(rng, "sequence"))),
        1 => head.push_str(&format!(" {}", kw(rng, "choice"))),
        2 => head.push_str(&format!(" {} {} {}", kw(rng, "loop"), kw(rng, "until"), event(rng))),
        _ => {}
    }
    let mut out = format!("  {head} {{ // set\n");
    for _ in 0..rng.gen_range(1..5) {
        out.push_str(&rule(rng));
    }
    out.push_str("  }\n");
    out
}

/// A random well-formed rule file.
pub fn generate(rng: &mut impl Rng) -> String {
    let wrapped = rng.gen_bool(0.4);
    let mut out = String::from("// generated\n");
    if wrapped {
        out.push_str(&format!("{} {{\n", kw(rng, "Begin")));
    }
    for _ in 0..rng.gen_range(1..5) {
        out.push_str(&rule_set(rng));
    }
    if wrapped {
        out.push_str(&format!("}} {}\n", kw(rng, "End")));
    }
    out
}

/// Parses, prints and re-tokenises `src`; the token streams must agree and
/// the printed text must parse to the same tree.
pub fn round_trip(src: &str) -> Result<(), String> {
    let file = parse_file(src).map_err(|e| e.to_string())?;
    let printed = file.to_string();
    let before = token_kinds(src).map_err(|e| e.to_string())?;
    let after = token_kinds(&printed).map_err(|e| format!("printed text does not lex: {e}"))?;
    if before != after {
        return Err(format!("token streams differ\n--- source\n{src}\n--- printed\n{printed}"));
    }
    let again = parse_file(&printed).map_err(|e| format!("printed text does not parse: {e}"))?;
    if again != file {
        return Err("re-parsed tree differs".into());
    }
    Ok(())
}

/// Malformed files with the 1-based line of their first error.
pub fn malformed() -> Vec<(&'static str, &'static str, usize)> {
    vec![
        ("missing_brace", "rules for <A>\n  When a.b THEN DO <P>.S:m();\n}\n", 2),
        ("missing_event", "rules for <A> {\n  When\n    THEN DO <P>.S:m();\n}\n", 3),
        ("unclosed_provider", "rules for <A> {\n  When a.b THEN DO\n    <P.S:m();\n}\n", 3),
        ("unterminated_string", "rules for <A> {\n  When a.b THEN DO\n    <P>.S:m(\"abc);\n}\n", 3),
        ("bad_time", "rules {\n  When a.b\n  If a.t > 25:00\n  THEN DO <P>.S:m();\n}\n", 3),
        ("missing_then", "rules {\n  When a.b\n  If a.t > 3\n  <P>.S:m();\n}\n", 4),
        ("begin_without_end", "Begin {\n  rules { When a.b THEN DO <P>.S:m(); }\n}\n", 4),
        ("stray_character", "rules {\n  When a.b THEN DO\n    <P>.S:m(@);\n}\n", 3),
        ("dangling_and", "rules {\n  When a.b\n  If a.c &&\n  THEN DO <P>.S:m();\n}\n", 4),
        ("loop_without_until", "// comment\nrules for X loop {\n  When a.b THEN DO <P>.S:m();\n}\n", 2),
    ]
}
