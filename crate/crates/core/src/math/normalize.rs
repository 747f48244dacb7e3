//! Textual clean-up of competition-style answers before parsing.

/// Upper bound on rewrite rounds; every rule shrinks the text or removes a
/// character no other rule produces, so the loop settles well before this.
const MAX_ROUNDS: usize = 64;

/// Canonicalizes an answer string. Best effort: unknown commands pass through.
///
/// Rules: drop `\$` and `$`, `\left`/`\right`, thin spaces (`\! \, \; \:`),
/// `\displaystyle` and degree marks; `\dfrac`/`\tfrac` become `\frac`;
/// `\cdot`/`\times` become `*`; a trailing `\text{..}` unit is dropped and a
/// lone `\text{..}` unwrapped; `x\%` becomes `x/100`; digit-group commas in a
/// plain number are removed; trailing periods and outer whitespace go.
///
/// The rules run to a fixpoint, so the function is idempotent.
pub fn normalize_math(text: &str) -> String {
    let mut current = text.to_string();
    for _ in 0..MAX_ROUNDS {
        let next = rewrite_once(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn rewrite_once(input: &str) -> String {
    let mut s = input.trim().replace("\\$", "").replace('$', "");
    for cmd in ["\\left.", "\\right."] {
        s = s.replace(cmd, "");
    }
    for (name, replacement) in [
        ("left", ""),
        ("right", ""),
        ("displaystyle", ""),
        ("dfrac", "\\frac"),
        ("tfrac", "\\frac"),
        ("cdot", "*"),
        ("times", "*"),
        ("lvert", "|"),
        ("rvert", "|"),
        ("degree", ""),
    ] {
        s = replace_command(&s, name, replacement);
    }
    for thin in ["\\!", "\\,", "\\;", "\\:"] {
        s = s.replace(thin, "");
    }
    for degrees in ["^{\\circ}", "^\\circ"] {
        s = s.replace(degrees, "");
    }
    s = s.replace("{,}", ",");
    s = s.replace("\\%", "/100").replace('%', "/100");
    s = strip_text_wrappers(s.trim());
    s = s.trim().trim_end_matches('.').trim_end().to_string();
    drop_digit_group_commas(&s).unwrap_or(s)
}

/// Replaces `\name` when it is not the prefix of a longer command name.
fn replace_command(s: &str, name: &str, replacement: &str) -> String {
    let needle = format!("\\{name}");
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(at) = rest.find(&needle) {
        let after = &rest[at + needle.len()..];
        out.push_str(&rest[..at]);
        if after.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
            out.push_str(&needle);
        } else {
            out.push_str(replacement);
        }
        rest = after;
    }
    out.push_str(rest);
    out
}

const TEXT_COMMANDS: [&str; 4] = ["\\text{", "\\textbf{", "\\mbox{", "\\mathrm{"];

/// Drops a trailing unit such as `3\text{ cm}`, or unwraps an answer that is
/// nothing but `\text{...}`.
fn strip_text_wrappers(s: &str) -> String {
    for cmd in TEXT_COMMANDS {
        for (at, _) in s.match_indices(cmd) {
            let body_start = at + cmd.len();
            let Some(close) = matching_brace(s, body_start) else { continue };
            if close + 1 != s.len() {
                continue;
            }
            let before = s[..at].trim_end();
            return if before.is_empty() { s[body_start..close].trim().to_string() } else { before.to_string() };
        }
    }
    s.to_string()
}

/// Byte index of the `}` closing a group whose body starts at `start`.
fn matching_brace(s: &str, start: usize) -> Option<usize> {
    let mut depth = 1usize;
    let mut iter = s[start..].char_indices();
    while let Some((i, c)) = iter.next() {
        match c {
            '\\' => {
                iter.next();
            }
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + i);
                }
            }
            _ => {}
        }
    }
    None
}

/// `12,345,678.9` -> `12345678.9` when the whole string is such a number.
fn drop_digit_group_commas(s: &str) -> Option<String> {
    let body = s.strip_prefix('-').unwrap_or(s);
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    if frac_part.is_some_and(|f| f.is_empty() || !f.chars().all(|c| c.is_ascii_digit())) {
        return None;
    }
    let groups: Vec<&str> = int_part.split(',').collect();
    if groups.len() < 2 {
        return None;
    }
    let first_ok = (1..=3).contains(&groups[0].len()) && groups[0].chars().all(|c| c.is_ascii_digit());
    let rest_ok = groups[1..].iter().all(|g| g.len() == 3 && g.chars().all(|c| c.is_ascii_digit()));
    (first_ok && rest_ok).then(|| s.replace(',', ""))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalizes_fraction_commands() {
        assert_eq!(normalize_math("$\\dfrac{1}{2}$"), "\\frac{1}{2}");
        assert_eq!(normalize_math("\\tfrac{3}{4}"), "\\frac{3}{4}");
    }

    #[test]
    fn trailing_period_and_whitespace() {
        assert_eq!(normalize_math("42."), "42");
        assert_eq!(normalize_math("  7 .  "), "7");
    }

    #[test]
    fn units_and_text() {
        assert_eq!(normalize_math("3\\text{ cm}"), "3");
        assert_eq!(normalize_math("12 \\mbox{ inches}"), "12");
        assert_eq!(normalize_math("\\text{Monday}"), "Monday");
        assert_eq!(normalize_math("90^\\circ"), "90");
    }

    #[test]
    fn delimiters_and_spacing() {
        assert_eq!(normalize_math("\\left( 1, 2 \\right)"), "( 1, 2 )");
        assert_eq!(normalize_math("1\\,000\\!"), "1000");
        assert_eq!(normalize_math("\\leftarrow"), "\\leftarrow");
    }

    #[test]
    fn multiplication_markers() {
        assert_eq!(normalize_math("2\\cdot 3"), "2* 3");
        assert_eq!(normalize_math("2\\times3"), "2*3");
        assert_eq!(normalize_math("1,\\cdots"), "1,\\cdots");
    }

    #[test]
    fn percent() {
        assert_eq!(normalize_math("50\\%"), "50/100");
        assert_eq!(normalize_math("12.5%"), "12.5/100");
    }

    #[test]
    fn digit_groups() {
        assert_eq!(normalize_math("1,000,000"), "1000000");
        assert_eq!(normalize_math("-12,345.5"), "-12345.5");
        assert_eq!(normalize_math("1{,}000"), "1000");
        assert_eq!(normalize_math("1,2"), "1,2");
        assert_eq!(normalize_math("1,0000"), "1,0000");
    }

    #[test]
    fn idempotent_on_tricky_input() {
        for s in ["$\\l$eft(", "\\text{\\text{ cm}}", "5.\\text{ m}.", "$$ 3 $$", "\\left.\\right."] {
            let once = normalize_math(s);
            assert_eq!(normalize_math(&once), once, "input {s:?}");
        }
    }
}
