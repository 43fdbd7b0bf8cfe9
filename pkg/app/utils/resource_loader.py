"""
Access to the PDDL fixtures, plans, scripts and dot templates shipped in
``app/resources``.
"""
import os
from typing import Any, Dict, List, Optional

import jinja2


class ResourceLoader:
    """
    Reads packaged resources and renders the graphviz templates.
    """
    def __init__(self, resources_dir: Optional[str] = None):
        if resources_dir is None:
            resources_dir = os.path.join(os.path.dirname(os.path.dirname(__file__)), "resources")

        self.resources_dir = resources_dir
        self.env = jinja2.Environment(
            loader=jinja2.FileSystemLoader(os.path.join(resources_dir, "templates")),
            autoescape=False,
            trim_blocks=True,
            lstrip_blocks=True,
            keep_trailing_newline=True,
        )

    def list_resources(self, suffix: Optional[str] = None) -> List[str]:
        """
        List resource file names, optionally filtered by suffix (e.g. ".pddl").
        """
        names = []
        for item in sorted(os.listdir(self.resources_dir)):
            full = os.path.join(self.resources_dir, item)
            if not os.path.isfile(full) or item.startswith("__"):
                continue
            if suffix is None or item.endswith(suffix):
                names.append(item)
        return names

    def path(self, name: str) -> str:
        """
        Absolute path of a resource.

        Raises:
            FileNotFoundError: If the resource does not exist.
        """
        full = os.path.join(self.resources_dir, name)
        if not os.path.isfile(full):
            raise FileNotFoundError(f"Resource {name} not found")
        return full

    def read(self, name: str) -> str:
        with open(self.path(name), "r", encoding="utf-8") as f:
            return f.read()

    def render(self, template_name: str, context: Dict[str, Any]) -> str:
        """
        Render a template from ``resources/templates``.

        Raises:
            FileNotFoundError: If the template does not exist.
        """
        try:
            template = self.env.get_template(template_name)
        except jinja2.TemplateNotFound as e:
            raise FileNotFoundError(f"Template {template_name} not found") from e
        return template.render(**context)


_resource_loader = None


def get_resource_loader() -> ResourceLoader:
    """
    Get the global ResourceLoader for the packaged resources.
    """
    global _resource_loader
    if _resource_loader is None:
        _resource_loader = ResourceLoader()
    return _resource_loader
