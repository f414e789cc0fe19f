//! Reader for `aapt dump xmltree` / `aapt2 dump xmltree` text output.
//!
//! ```text
//! N: android=http://schemas.android.com/apk/res/android
//!   E: manifest (line=2)
//!     A: package="com.x" (Raw: "com.x")
//!     E: application (line=8)
//!       E: activity (line=9)
//!         A: android:name(0x01010003)="com.x.Main" (Raw: "com.x.Main")
//!         A: android:exported(0x01010010)=(type 0x12)0xffffffff
//! ```

use super::{Element, ManifestError};

fn indent_of(line: &str) -> usize {
    line.len() - line.trim_start().len()
}

/// `android:name(0x01010003)` or `http://.../android:name(0x..)` -> `name`.
fn attr_name(raw: &str) -> String {
    let base = raw.split('(').next().unwrap_or(raw);
    base.rsplit(':').next().unwrap_or(base).trim().to_string()
}

fn attr_value(raw: &str) -> String {
    let raw = raw.trim();
    if let Some(rest) = raw.strip_prefix('"') {
        // value ends at the closing quote preceding ` (Raw: ...)` or end of line
        let end = rest
            .find("\" (Raw")
            .or_else(|| rest.rfind('"'))
            .unwrap_or(rest.len());
        return rest[..end].to_string();
    }
    if let Some(rest) = raw.strip_prefix("(type 0x12)") {
        let v = rest.trim();
        return if v == "0x0" || v == "0" { "false".into() } else { "true".into() };
    }
    if let Some(idx) = raw.find(')') {
        if raw.starts_with("(type") {
            return raw[idx + 1..].trim().to_string();
        }
    }
    raw.to_string()
}

fn parse_attr(body: &str) -> Option<(String, String)> {
    // the name may itself contain ':' (namespaces, URIs) so split on the first
    // '=' that follows the resource-id parenthesis or the bare name
    let eq = match body.find(")=") {
        Some(i) => i + 1,
        None => body.find('=')?,
    };
    Some((attr_name(&body[..eq]), attr_value(&body[eq + 1..])))
}

pub(crate) fn parse_tree(text: &str) -> Result<Element, ManifestError> {
    let mut root = Element { tag: "#document".into(), ..Default::default() };
    // stack of (indent, path of child indices from root)
    let mut stack: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut saw_element = false;

    fn node_at<'a>(root: &'a mut Element, path: &[usize]) -> &'a mut Element {
        path.iter().fold(root, |el, &i| &mut el.children[i])
    }

    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let indent = indent_of(line);
        let body = line.trim_start();
        if let Some(rest) = body.strip_prefix("E: ") {
            while stack.last().is_some_and(|(i, _)| *i >= indent) {
                stack.pop();
            }
            let tag = rest.split_whitespace().next().unwrap_or("").to_string();
            if tag.is_empty() {
                return Err(ManifestError::MalformedManifest(format!(
                    "line {}: element without a tag",
                    lineno + 1
                )));
            }
            let parent_path = stack.last().map(|(_, p)| p.clone()).unwrap_or_default();
            let parent = node_at(&mut root, &parent_path);
            parent.children.push(Element { tag, ..Default::default() });
            let mut path = parent_path;
            path.push(parent.children.len() - 1);
            stack.push((indent, path));
            saw_element = true;
        } else if let Some(rest) = body.strip_prefix("A: ") {
            let Some((_, path)) = stack.last() else {
                return Err(ManifestError::MalformedManifest(format!(
                    "line {}: attribute outside of an element",
                    lineno + 1
                )));
            };
            let attr = parse_attr(rest).ok_or_else(|| {
                ManifestError::MalformedManifest(format!("line {}: bad attribute", lineno + 1))
            })?;
            let path = path.clone();
            node_at(&mut root, &path).attrs.push(attr);
        } else if body.starts_with("N: ") || body.starts_with("C: ") || body.starts_with("T: ") {
            // namespaces, cdata and text nodes carry nothing we need
        } else {
            return Err(ManifestError::MalformedManifest(format!(
                "line {}: unrecognised xmltree line",
                lineno + 1
            )));
        }
    }
    if !saw_element {
        return Err(ManifestError::MalformedManifest("no elements in xmltree dump".into()));
    }
    Ok(root)
}
