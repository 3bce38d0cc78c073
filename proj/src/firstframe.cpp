// SPDX-License-Identifier: Apache-2.0
#include "oie/firstframe.hpp"

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>

namespace oie {

namespace fs = std::filesystem;

namespace {

std::string dims_string(const VideoTensor& v) {
  return std::to_string(v.frames) + "x" + std::to_string(v.channels) + "x" + std::to_string(v.height) + "x" +
         std::to_string(v.width);
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "oie-editor-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw RuntimeError("editor: cannot create a request directory");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

}  // namespace

EditorResult Editor::edit(const EditorRequest& req) {
  if (req.i0.frames != 1 || req.i0.channels != 3) {
    throw ConfigError("editor " + name() + ": i0 must be a single RGB frame, got " + dims_string(req.i0));
  }
  if (req.garment.frames != 1 || req.garment.channels != 3) {
    throw ConfigError("editor " + name() + ": garment must be a single RGB image, got " + dims_string(req.garment));
  }
  ++calls_;
  EditorResult res{run(req), name()};
  if (!res.ir.same_shape(req.i0)) {
    throw RuntimeError("editor " + name() + ": output shape " + dims_string(res.ir) + " does not match i0 " +
                       dims_string(req.i0));
  }
  for (float v : res.ir.data) {
    if (!(v >= 0.0f && v <= 1.0f)) throw RuntimeError("editor " + name() + ": output pixel outside [0, 1]");
  }
  return res;
}

VideoTensor OracleEditor::run(const EditorRequest& req) {
  if (!req.scene || !req.garment_id) {
    throw ConfigError("oracle editor: request carries no scene metadata; register a plug-in editor for "
                      "inputs outside the synthetic world");
  }
  const SceneSpec& scene = *req.scene;
  if (scene.height != req.i0.height || scene.width != req.i0.width) {
    throw ConfigError("oracle editor: scene metadata does not match i0 dimensions");
  }
  const GarmentSpec g = make_garment(*req.garment_id, req.garment.height, req.garment.width);
  if (render_garment(g) != req.garment) {
    throw ConfigError("oracle editor: garment image does not match garment id " + std::to_string(*req.garment_id));
  }
  const VideoTensor rendered = render_video(scene, g).frame(0);
  VideoTensor ir = req.i0;
  const auto quad = scene.torso_quad(0);
  for (int y = 0; y < ir.height; ++y) {
    for (int x = 0; x < ir.width; ++x) {
      if (!inside_quad(quad, x + 0.5, y + 0.5)) continue;
      for (int c = 0; c < ir.channels; ++c) ir.at(0, c, y, x) = rendered.at(0, c, y, x);
    }
  }
  return ir;
}

EditorResult oracle_edit(const EditorRequest& req) {
  OracleEditor e;
  return e.edit(req);
}

ProcessEditor::ProcessEditor(std::string name, std::string command)
    : name_(std::move(name)), command_(std::move(command)) {
  if (name_.empty()) throw ConfigError("plug_editor: empty editor name");
  if (command_.empty()) throw ConfigError("plug_editor: editor " + name_ + " has an empty command");
}

VideoTensor ProcessEditor::run(const EditorRequest& req) {
  TempDir dir;
  write_request_dir(req, dir.path());
  const std::string cmd = command_ + " " + shell_quote(dir.path().string());
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw RuntimeError("editor " + name_ + ": command failed (status " + std::to_string(status) + ")");
  }
  const fs::path out = dir.path() / "ir.tns";
  if (!fs::exists(out)) throw RuntimeError("editor " + name_ + ": no ir.tns written");
  try {
    return video_from_tensor(load_tns(out));
  } catch (const std::exception& e) {
    throw RuntimeError("editor " + name_ + ": unreadable ir.tns: " + e.what());
  }
}

std::unique_ptr<Editor> plug_editor(const std::string& name, const std::string& command) {
  return std::make_unique<ProcessEditor>(name, command);
}

void write_request_dir(const EditorRequest& req, const fs::path& dir) {
  save_tns(dir / "i0.tns", to_tensor(req.i0));
  save_tns(dir / "garment.tns", to_tensor(req.garment));
  nlohmann::json j = {{"instruction", req.instruction},
                      {"dims", {req.i0.channels, req.i0.height, req.i0.width}},
                      {"garment_dims", {req.garment.channels, req.garment.height, req.garment.width}}};
  if (req.scene) j["scene"] = to_json(*req.scene);
  if (req.garment_id) j["garment_id"] = *req.garment_id;
  std::ofstream f(dir / "request.json");
  f << j.dump(2) << "\n";
  if (!f) throw RuntimeError("editor: cannot write request.json in " + dir.string());
}

EditorRequest read_request_dir(const fs::path& dir) {
  std::ifstream f(dir / "request.json");
  if (!f) throw RuntimeError("editor: missing request.json in " + dir.string());
  const auto j = nlohmann::json::parse(f);
  EditorRequest req;
  req.instruction = j.at("instruction").get<std::string>();
  req.i0 = video_from_tensor(load_tns(dir / "i0.tns"));
  req.garment = video_from_tensor(load_tns(dir / "garment.tns"));
  if (j.contains("scene")) req.scene = scene_from_json(j.at("scene"));
  if (j.contains("garment_id")) req.garment_id = j.at("garment_id").get<int>();
  return req;
}

}  // namespace oie
