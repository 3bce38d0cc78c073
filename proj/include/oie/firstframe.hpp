// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "oie/synthdata.hpp"

namespace oie {

struct EditorRequest {
  VideoTensor i0;       // 1 x C x H x W first frame of the source video
  std::string instruction;
  VideoTensor garment;  // 1 x C x Hg x Wg reference garment image
  // Synthetic-world metadata. Only the oracle reads it.
  std::optional<SceneSpec> scene;
  std::optional<int> garment_id;
};

struct EditorResult {
  VideoTensor ir;
  std::string editor;
};

// An image try-on editor. edit() validates the request and the result's
// shape and range and counts invocations.
class Editor {
 public:
  virtual ~Editor() = default;
  virtual std::string name() const = 0;

  EditorResult edit(const EditorRequest& req);
  int calls() const { return calls_; }

 protected:
  virtual VideoTensor run(const EditorRequest& req) = 0;

 private:
  int calls_ = 0;
};

// Exact editor for synthetic scenes: the renderer's frame 0 for the requested
// garment inside the torso quad, i0 everywhere else.
class OracleEditor final : public Editor {
 public:
  std::string name() const override { return "oracle"; }

 protected:
  VideoTensor run(const EditorRequest& req) override;
};

EditorResult oracle_edit(const EditorRequest& req);

// External editor run as `<command> <request-dir>`. The directory holds
// i0.tns, garment.tns and request.json; the editor must write ir.tns there.
class ProcessEditor final : public Editor {
 public:
  ProcessEditor(std::string name, std::string command);
  std::string name() const override { return name_; }

 protected:
  VideoTensor run(const EditorRequest& req) override;

 private:
  std::string name_;
  std::string command_;
};

std::unique_ptr<Editor> plug_editor(const std::string& name, const std::string& command);

// Request directory helpers shared by ProcessEditor and editor executables.
void write_request_dir(const EditorRequest& req, const std::filesystem::path& dir);
EditorRequest read_request_dir(const std::filesystem::path& dir);

}  // namespace oie
