use clap::Command;
use timebar_core::config::{Config, KEYS};

/// Markdown reference built from the `--help` text of every visible command.
pub fn markdown(root: &mut Command) -> String {
    root.build();
    let mut out = String::from("# timebar command line\n\nGenerated by `timebar gen-docs`; do not edit.\n");
    section(&mut out, root, &[]);
    config_keys(&mut out);
    out
}

fn section(out: &mut String, cmd: &Command, parents: &[&str]) {
    let mut path: Vec<&str> = parents.to_vec();
    path.push(cmd.get_name());
    let title = path.join(" ");
    let help = cmd.clone().render_long_help().to_string();
    out.push_str(&format!("\n## `{title}`\n\n```text\n{}\n```\n", help.trim_end()));
    for sub in cmd.get_subcommands().filter(|s| !s.is_hide_set() && s.get_name() != "help") {
        section(out, sub, &path);
    }
}

fn config_keys(out: &mut String) {
    let defaults = Config::default().to_pairs();
    out.push_str("\n## Configuration keys\n\n| Key | Default |\n|---|---|\n");
    for key in KEYS {
        let value = defaults.get(key).map(String::as_str).unwrap_or("");
        out.push_str(&format!("| `{key}` | `{}` |\n", value.replace('|', "\\|")));
    }
}
