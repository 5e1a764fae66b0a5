//! The bundled case-study models.

pub const JOOMLA: &str = include_str!("../../../fixtures/joomla.sqlf");
pub const YAVWA: &str = include_str!("../../../fixtures/yavwa.sqlf");
pub const SECOND_ORDER: &str = include_str!("../../../fixtures/second_order.sqlf");
pub const WEBGOAT_AUTH: &str = include_str!("../../../fixtures/webgoat_auth.sqlf");
pub const WEBGOAT_EXTRACT: &str = include_str!("../../../fixtures/webgoat_extract.sqlf");

/// `(file name, source)` for every bundled fixture.
pub const ALL: &[(&str, &str)] = &[
    ("joomla.sqlf", JOOMLA),
    ("yavwa.sqlf", YAVWA),
    ("second_order.sqlf", SECOND_ORDER),
    ("webgoat_auth.sqlf", WEBGOAT_AUTH),
    ("webgoat_extract.sqlf", WEBGOAT_EXTRACT),
];

pub fn by_name(name: &str) -> Option<&'static str> {
    let stem = name.trim_end_matches(".sqlf");
    ALL.iter()
        .find(|(n, _)| n.trim_end_matches(".sqlf") == stem)
        .map(|(_, s)| *s)
}

/// The model with every raw `query(...)` term replaced by
/// `sanitizedQuery(...)`; the symbol declaration is left alone.
pub fn sanitized(src: &str) -> String {
    let mut out = String::with_capacity(src.len());
    let mut rest = src;
    while let Some(pos) = rest.find("query(") {
        let prefixed = pos > 0
            && rest[..pos].ends_with(|c: char| c.is_ascii_alphanumeric() || c == '_')
            || rest[pos..].starts_with("query(message)");
        out.push_str(&rest[..pos]);
        out.push_str(if prefixed {
            "query("
        } else {
            "sanitizedQuery("
        });
        rest = &rest[pos + "query(".len()..];
    }
    out.push_str(rest);
    out
}
